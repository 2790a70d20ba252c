#include "ctpipe/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ctpipe/rng.hpp"

namespace ctpipe {

using nlohmann::json;

namespace {

DatasetStats compute_stats(const Taxonomy& taxonomy, const std::vector<CaptureEvent>& events) {
  DatasetStats s;
  s.events_per_class.assign(static_cast<std::size_t>(taxonomy.size()), 0);
  s.images_per_class.assign(static_cast<std::size_t>(taxonomy.size()), 0);
  for (const auto& e : events) {
    ++s.n_events;
    s.n_images += e.images.size();
    if (e.label.empty) {
      ++s.n_empty_events;
      s.n_empty_images += e.images.size();
    } else {
      const auto c = static_cast<std::size_t>(*e.label.species);
      ++s.events_per_class[c];
      s.images_per_class[c] += e.images.size();
    }
    if (e.multi_species()) ++s.n_multi_species_events;
  }
  return s;
}

void validate_events(const Taxonomy& taxonomy, const std::vector<CaptureEvent>& events) {
  std::unordered_set<std::string_view> event_ids;
  std::unordered_set<std::string_view> image_ids;
  for (const auto& e : events) {
    if (e.images.empty()) throw DataError("event '" + e.event_id + "' has no images");
    if (!event_ids.insert(e.event_id).second) {
      throw DataError("duplicate event_id '" + e.event_id + "'");
    }
    if (!e.label.valid()) throw DataError("event '" + e.event_id + "' has an inconsistent label");
    if (e.label.species && (*e.label.species < 0 || *e.label.species >= taxonomy.size())) {
      throw DataError("event '" + e.event_id + "' species id out of taxonomy range");
    }
    for (const auto& img : e.images) {
      if (!image_ids.insert(img.image_id).second) {
        throw DataError("duplicate image_id '" + img.image_id + "'");
      }
      if (img.event_id != e.event_id) {
        throw DataError("image '" + img.image_id + "' does not carry its event id");
      }
    }
  }
}

struct ParsedRecord {
  std::string event_id;
  std::string image_id;
  std::vector<double> features;
  bool empty = true;
  std::vector<int> species;  // all listed species ids, primary first
  std::optional<CountBin> count;
  std::optional<AttributeSet> attributes;
  SplitHint split = SplitHint::none;
};

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw DataError("manifest parse error at line " + std::to_string(line_no) + ": " + what);
}

std::vector<double> load_feature_ref(const std::filesystem::path& manifest_dir,
                                     const std::string& ref, std::size_t line_no) {
  std::filesystem::path p(ref);
  if (p.is_relative()) p = manifest_dir / p;
  std::ifstream in(p);
  if (!in) line_error(line_no, "feature_ref '" + ref + "' cannot be opened");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    line_error(line_no, "feature_ref '" + ref + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) line_error(line_no, "feature_ref '" + ref + "' must hold a JSON array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) line_error(line_no, "feature_ref '" + ref + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

ParsedRecord parse_record(const json& j, const Taxonomy& taxonomy,
                          const std::filesystem::path& manifest_dir, std::size_t line_no) {
  ParsedRecord r;
  if (!j.is_object()) line_error(line_no, "record is not a JSON object");

  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) line_error(line_no, std::string("missing field '") + key + "'");
    return *it;
  };

  const json& ev = require("event_id");
  const json& im = require("image_id");
  if (!ev.is_string() || !im.is_string()) line_error(line_no, "event_id/image_id must be strings");
  r.event_id = ev.get<std::string>();
  r.image_id = im.get<std::string>();
  if (r.event_id.empty() || r.image_id.empty()) line_error(line_no, "empty event_id or image_id");

  const bool has_features = j.contains("features");
  const bool has_ref = j.contains("feature_ref");
  if (has_features == has_ref) {
    line_error(line_no, "exactly one of 'features' and 'feature_ref' is required");
  }
  if (has_features) {
    const json& f = j["features"];
    if (!f.is_array()) line_error(line_no, "'features' must be an array of numbers");
    r.features.reserve(f.size());
    for (const auto& v : f) {
      if (!v.is_number()) line_error(line_no, "'features' holds a non-number");
      const double x = v.get<double>();
      if (!std::isfinite(x)) line_error(line_no, "'features' holds a non-finite value");
      r.features.push_back(x);
    }
  } else {
    if (!j["feature_ref"].is_string()) line_error(line_no, "'feature_ref' must be a string path");
    r.features = load_feature_ref(manifest_dir, j["feature_ref"].get<std::string>(), line_no);
  }

  const json& empty = require("empty");
  if (!empty.is_boolean()) line_error(line_no, "'empty' must be a boolean");
  r.empty = empty.get<bool>();

  auto species_id = [&](const json& name) {
    if (!name.is_string()) line_error(line_no, "species entries must be strings");
    auto id = taxonomy.id(name.get<std::string>());
    if (!id) {
      throw DataError("manifest taxonomy error at line " + std::to_string(line_no) +
                      ": unknown species '" + name.get<std::string>() + "'");
    }
    return *id;
  };

  if (r.empty) {
    if (j.contains("species") || j.contains("count") || j.contains("attributes")) {
      line_error(line_no, "empty record must not carry species/count/attributes");
    }
  } else {
    const json& sp = require("species");
    if (sp.is_array()) {
      if (sp.empty()) line_error(line_no, "'species' array must not be empty");
      for (const auto& name : sp) r.species.push_back(species_id(name));
    } else {
      r.species.push_back(species_id(sp));
    }

    const json& count = require("count");
    if (!count.is_number_integer()) line_error(line_no, "'count' must be an integer");
    const auto n = count.get<long long>();
    if (n < 1) line_error(line_no, "'count' must be >= 1");
    r.count = count_to_bin(static_cast<int>(std::min<long long>(n, 1000000)));

    if (j.contains("attributes")) {
      const json& attrs = j["attributes"];
      if (!attrs.is_object()) line_error(line_no, "'attributes' must be an object");
      AttributeSet a;
      for (int i = 0; i < AttributeSet::kAttributes; ++i) {
        const std::string key(AttributeSet::kNames[static_cast<std::size_t>(i)]);
        if (attrs.contains(key)) {
          if (!attrs[key].is_boolean()) line_error(line_no, "attribute '" + key + "' must be a boolean");
          a.set_flag(i, attrs[key].get<bool>());
        }
      }
      r.attributes = a;
    }
  }

  if (j.contains("split")) {
    const json& s = j["split"];
    if (!s.is_string()) line_error(line_no, "'split' must be a string");
    const auto v = s.get<std::string>();
    if (v == "train") {
      r.split = SplitHint::train;
    } else if (v == "test") {
      r.split = SplitHint::test;
    } else {
      line_error(line_no, "'split' must be \"train\" or \"test\"");
    }
  }
  return r;
}

LabelSet record_label(const ParsedRecord& r) {
  if (r.empty) return LabelSet::empty_label();
  return LabelSet::animal(r.species.front(), *r.count, r.attributes);
}

Dataset rebuild(const Dataset& d, std::vector<CaptureEvent> events) {
  return Dataset(d.taxonomy(), std::move(events));
}

}  // namespace

Dataset::Dataset(Taxonomy taxonomy, std::vector<CaptureEvent> events)
    : taxonomy_(std::move(taxonomy)), events_(std::move(events)) {
  validate_events(taxonomy_, events_);
  stats_ = compute_stats(taxonomy_, events_);
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  const auto manifest_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  std::string line;
  std::size_t line_no = 0;

  // header
  Taxonomy taxonomy;
  {
    if (!std::getline(in, line)) throw DataError("manifest '" + path.string() + "' is empty");
    ++line_no;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(line_no, e.what());
    }
    if (!j.is_object() || !j.contains("taxonomy") || !j["taxonomy"].is_array()) {
      line_error(line_no, "header must be an object with a 'taxonomy' array");
    }
    std::vector<std::string> names;
    for (const auto& n : j["taxonomy"]) {
      if (!n.is_string()) line_error(line_no, "taxonomy entries must be strings");
      names.push_back(n.get<std::string>());
    }
    taxonomy = Taxonomy(std::move(names));
  }

  std::vector<CaptureEvent> events;
  std::unordered_set<std::string> closed_events;
  CaptureEvent current;
  bool open = false;
  std::vector<int> current_species;
  SplitHint current_hint = SplitHint::none;

  auto close_current = [&]() {
    if (!open) return;
    closed_events.insert(current.event_id);
    events.push_back(propagate_event_labels(std::move(current)));
    current = CaptureEvent{};
    open = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(line_no, e.what());
    }
    ParsedRecord r = parse_record(j, taxonomy, manifest_dir, line_no);
    const LabelSet label = record_label(r);

    if (open && r.event_id == current.event_id) {
      if (label != current.label || r.species != current_species || r.split != current_hint) {
        throw DataError("manifest integrity error at line " + std::to_string(line_no) +
                        ": event '" + r.event_id + "' has conflicting labels");
      }
    } else {
      close_current();
      if (closed_events.count(r.event_id)) {
        throw DataError("manifest integrity error at line " + std::to_string(line_no) +
                        ": duplicate event_id '" + r.event_id + "'");
      }
      open = true;
      current.event_id = r.event_id;
      current.label = label;
      current.split_hint = r.split;
      current_species = r.species;
      current_hint = r.split;
      if (r.species.size() > 1) {
        current.extra_species.assign(r.species.begin() + 1, r.species.end());
      }
    }
    current.images.push_back(ImageRecord{r.image_id, r.event_id, std::move(r.features), label});
  }
  close_current();

  return Dataset(std::move(taxonomy), std::move(events));
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");

  json header;
  header["taxonomy"] = dataset.taxonomy().names();
  out << header.dump() << '\n';

  for (const auto& e : dataset.events()) {
    for (const auto& img : e.images) {
      json j;
      j["event_id"] = e.event_id;
      j["image_id"] = img.image_id;
      j["features"] = img.features;
      j["empty"] = e.label.empty;
      if (!e.label.empty) {
        if (e.multi_species()) {
          std::vector<std::string> names{dataset.taxonomy().name(*e.label.species)};
          for (int id : e.extra_species) names.push_back(dataset.taxonomy().name(id));
          j["species"] = names;
        } else {
          j["species"] = dataset.taxonomy().name(*e.label.species);
        }
        j["count"] = bin_representative(*e.label.count);
        if (e.label.attributes) {
          json attrs;
          for (int i = 0; i < AttributeSet::kAttributes; ++i) {
            attrs[std::string(AttributeSet::kNames[static_cast<std::size_t>(i)])] =
                e.label.attributes->flag(i);
          }
          j["attributes"] = attrs;
        }
      }
      if (e.split_hint != SplitHint::none) {
        j["split"] = e.split_hint == SplitHint::train ? "train" : "test";
      }
      out << j.dump() << '\n';
    }
  }
  if (!out) throw DataError("write failed for manifest '" + path.string() + "'");
}

FilterResult filter_single_species(const Dataset& d) {
  std::vector<CaptureEvent> kept;
  kept.reserve(d.events().size());
  std::size_t removed = 0;
  for (const auto& e : d.events()) {
    if (e.multi_species()) {
      ++removed;
    } else {
      kept.push_back(e);
    }
  }
  FilterResult r;
  r.removed_events = removed;
  r.removed_fraction =
      d.events().empty() ? 0.0 : static_cast<double>(removed) / static_cast<double>(d.events().size());
  r.dataset = rebuild(d, std::move(kept));
  return r;
}

std::pair<Dataset, Dataset> split_by_event(const Dataset& d, const SplitSpec& spec) {
  const std::size_t n = d.events().size();
  if (n < 2) throw DataError("split_by_event: need at least 2 events, got " + std::to_string(n));
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("split_by_event: train_fraction must be in (0, 1)");
  }

  auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  std::vector<CaptureEvent> train, test;
  train.reserve(n_train);
  test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : test).push_back(d.events()[i]);
  }
  return {rebuild(d, std::move(train)), rebuild(d, std::move(test))};
}

std::optional<std::pair<Dataset, Dataset>> split_by_hint(const Dataset& d) {
  std::vector<CaptureEvent> train, test;
  for (const auto& e : d.events()) {
    switch (e.split_hint) {
      case SplitHint::train: train.push_back(e); break;
      case SplitHint::test: test.push_back(e); break;
      case SplitHint::none: return std::nullopt;
    }
  }
  return std::make_pair(rebuild(d, std::move(train)), rebuild(d, std::move(test)));
}

BalanceResult subsample_empty(const Dataset& d, std::size_t target_empty_images, std::uint64_t seed) {
  // all empty images, in manifest order
  struct Ref {
    std::size_t event;
    std::size_t image;
  };
  std::vector<Ref> empty_pool;
  for (std::size_t ei = 0; ei < d.events().size(); ++ei) {
    const auto& e = d.events()[ei];
    if (!e.label.empty) continue;
    for (std::size_t ii = 0; ii < e.images.size(); ++ii) empty_pool.push_back({ei, ii});
  }

  BalanceResult result;
  std::vector<std::vector<bool>> keep_image(d.events().size());

  if (empty_pool.size() <= target_empty_images) {
    if (empty_pool.size() < target_empty_images) {
      result.shortfall = true;
      result.warning = "only " + std::to_string(empty_pool.size()) + " empty images available, " +
                       std::to_string(target_empty_images) + " requested; keeping all";
    }
    result.dataset = d;  // nothing to drop
    return result;
  }

  std::vector<std::size_t> order(empty_pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  for (auto& flags : keep_image) flags.clear();
  for (std::size_t ei = 0; ei < d.events().size(); ++ei) {
    keep_image[ei].assign(d.events()[ei].images.size(), false);
  }
  for (std::size_t i = 0; i < target_empty_images; ++i) {
    const Ref& ref = empty_pool[order[i]];
    keep_image[ref.event][ref.image] = true;
  }

  std::vector<CaptureEvent> events;
  events.reserve(d.events().size());
  for (std::size_t ei = 0; ei < d.events().size(); ++ei) {
    const auto& e = d.events()[ei];
    if (!e.label.empty) {
      events.push_back(e);
      continue;
    }
    CaptureEvent kept = e;
    kept.images.clear();
    for (std::size_t ii = 0; ii < e.images.size(); ++ii) {
      if (keep_image[ei][ii]) kept.images.push_back(e.images[ii]);
    }
    if (!kept.images.empty()) events.push_back(std::move(kept));
  }
  result.dataset = rebuild(d, std::move(events));
  return result;
}

BalanceResult balance_empty(const Dataset& d, std::uint64_t seed) {
  const auto& s = d.stats();
  const std::size_t n_non_empty = s.n_images - s.n_empty_images;
  return subsample_empty(d, n_non_empty, seed);
}

}  // namespace ctpipe
