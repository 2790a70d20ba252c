#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctpipe/version.hpp"

namespace ctpipe::cli {

using nlohmann::json;

const std::map<std::string, SchemaEntry>& config_schema() {
  static const std::map<std::string, SchemaEntry> schema = {
      // general
      {"seed", {ValueType::unsigned64, "0", "master seed for every stochastic step"}},
      {"out_dir", {ValueType::text, ".", "output directory"}},
      {"manifest", {ValueType::text, "", "dataset manifest (JSONL)"}},

      // synth
      {"n_classes", {ValueType::integer, "48", "species classes in the synthetic taxonomy"}},
      {"feature_dim", {ValueType::integer, "8", "feature vector dimension"}},
      {"imbalance_exponent", {ValueType::real, "1.0", "power-law exponent for class frequencies"}},
      {"class_frequencies", {ValueType::text, "", "explicit class frequencies, comma separated"}},
      {"empty_fraction", {ValueType::real, "0.75", "fraction of empty capture events"}},
      {"images_per_event", {ValueType::text, "3", "\"1\"|\"2\"|\"3\" or three probabilities p1,p2,p3"}},
      {"noise_rate", {ValueType::real, "0.0", "label-propagation noise rate"}},
      {"n_events", {ValueType::integer, "1000", "number of capture events"}},
      {"class_separation", {ValueType::real, "6.0", "distance between class feature centers"}},
      {"attribute_marginals",
       {ValueType::text, "0.25,0.085,0.25,0.25,0.005,0.018", "six attribute base rates"}},

      // train
      {"stage", {ValueType::text, "stage2", "stage1 | stage2 | one_stage"}},
      {"train_fraction", {ValueType::real, "0.8", "event fraction assigned to the training split"}},
      {"batch_size", {ValueType::integer, "128", "SGD batch size"}},
      {"momentum", {ValueType::real, "0.9", "SGD momentum"}},
      {"epochs", {ValueType::integer, "55", "training epochs"}},
      {"epoch_size", {ValueType::integer, "0", "batches per epoch; 0 derives from the data"}},
      {"learning_rate", {ValueType::real, "0.01", "learning rate when no schedule is given"}},
      {"weight_decay", {ValueType::real, "0.0005", "weight decay when no schedule is given"}},
      {"schedule",
       {ValueType::text, "", "rows first-last:lr:wd joined by commas; empty uses the default policy"}},
      {"grad_clamp", {ValueType::real, "0", "output-layer gradient bound; 0 disables"}},
      {"hidden", {ValueType::text, "32,16", "hidden layer sizes"}},
      {"activation", {ValueType::text, "tanh", "tanh | relu"}},
      {"imbalance", {ValueType::text, "none", "none | weighted_loss | oversample | emphasis"}},
      {"weight_all_heads", {ValueType::boolean, "false", "extend class weights to count/attribute heads"}},
      {"emphasis_p_top1", {ValueType::real, "0.2", "feed probability of the top-1 retry queue"}},
      {"emphasis_p_top5", {ValueType::real, "0.35", "feed probability of the top-5 retry queue"}},
      {"ensemble_members", {ValueType::integer, "1", "independently trained models"}},
      {"balance_stage1", {ValueType::boolean, "true", "balance empty vs non-empty images for stage1"}},
      {"normalize_features", {ValueType::boolean, "true", "standardize features with train-set stats"}},

      // eval
      {"checkpoints", {ValueType::text, "", "checkpoint paths, comma separated"}},
      {"stage1_checkpoints", {ValueType::text, "", "optional stage-1 checkpoints for pipeline eval"}},
      {"write_predictions", {ValueType::boolean, "true", "write prediction JSONL files"}},

      // sweep
      {"predictions", {ValueType::text, "", "prediction JSONL consumed by sweep"}},
      {"species_target", {ValueType::real, "0.966", "human accuracy target for species"}},
      {"count_target", {ValueType::real, "0.90", "human accuracy target for counting"}},
      {"stage1_human_accuracy", {ValueType::real, "0.966", "assumed human accuracy on stage 1"}},
      {"threshold_grid", {ValueType::text, "0:0.99:0.01", "start:end:step confidence grid"}},
      {"stage1_auto_fraction", {ValueType::real, "-1", "override stage-1 automated fraction; <0 derives"}},
      {"species_auto_fraction", {ValueType::real, "-1", "override species automated fraction; <0 derives"}},
      {"count_auto_fraction", {ValueType::real, "-1", "override count automated fraction; <0 derives"}},

      // labor model
      {"baseline_hours", {ValueType::real, "30368", "volunteer hours behind baseline_images"}},
      {"baseline_images", {ValueType::real, "5500000", "images labeled in the baseline effort"}},
      {"corpus_images", {ValueType::real, "3200000", "images in the corpus being automated"}},
      {"hours_per_week", {ValueType::real, "40", "hours per person-week"}},

      // report
      {"eval_report", {ValueType::text, "", "image-level eval report JSON"}},
      {"event_report", {ValueType::text, "", "event-level eval report JSON"}},
      {"automation", {ValueType::text, "", "automation summary JSON"}},
      {"one_stage_report", {ValueType::text, "", "one-stage eval JSON for the mode comparison"}},
  };
  return schema;
}

namespace {

void validate_value(const std::string& key, const SchemaEntry& entry, const std::string& raw) {
  const auto fail = [&](const char* expected) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + raw + "'");
  };
  switch (entry.type) {
    case ValueType::integer: {
      std::int64_t v;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size()) fail("an integer");
      break;
    }
    case ValueType::unsigned64: {
      std::uint64_t v;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size()) fail("an unsigned integer");
      break;
    }
    case ValueType::real: {
      char* end = nullptr;
      errno = 0;
      std::strtod(raw.c_str(), &end);
      if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty()) fail("a number");
      break;
    }
    case ValueType::boolean:
      if (raw != "true" && raw != "false") fail("true or false");
      break;
    case ValueType::text:
      break;
  }
}

std::string json_scalar_to_string(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError("config key '" + key + "' must be a scalar");
}

}  // namespace

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& file) {
  RunConfig cfg;
  for (const auto& [key, entry] : config_schema()) {
    cfg.values_[key] = entry.default_value;
  }

  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file '" + file->string() + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + file->string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
      cfg.set(key, json_scalar_to_string(key, value));
    }
  }

  for (const auto& [key, entry] : config_schema()) {
    std::string env_key = kEnvPrefix;
    for (char c : key) env_key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(env_key.c_str())) cfg.set(key, v);
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& raw_value) {
  const auto it = config_schema().find(key);
  if (it == config_schema().end()) throw ConfigError("unknown config key '" + key + "'");
  validate_value(key, it->second, raw_value);
  values_[key] = raw_value;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  return std::stoll(values_.at(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return std::stoull(values_.at(key));
}

double RunConfig::get_double(const std::string& key) const { return std::stod(values_.at(key)); }

bool RunConfig::get_bool(const std::string& key) const { return values_.at(key) == "true"; }

const std::string& RunConfig::get_string(const std::string& key) const { return values_.at(key); }

namespace {

std::vector<std::string> split_csv(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split_csv(values_.at(key))) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + part + "' is not a number");
    }
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& part : split_csv(values_.at(key))) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + part + "' is not an integer");
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const {
  return split_csv(values_.at(key));
}

void RunConfig::write_resolved(const std::filesystem::path& path, const std::string& command) const {
  json j;
  j["command"] = command;
  j["tool_version"] = kVersion;
  json resolved = json::object();
  for (const auto& [key, value] : values_) resolved[key] = value;
  j["config"] = resolved;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write resolved config '" + path.string() + "'");
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ctpipe::cli
