#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctpipe/ensemble.hpp"
#include "ctpipe/imbalance.hpp"
#include "ctpipe/manifest.hpp"
#include "ctpipe/metrics.hpp"
#include "ctpipe/model.hpp"
#include "ctpipe/prep.hpp"
#include "ctpipe/synthgen.hpp"
#include "ctpipe/threshold.hpp"
#include "ctpipe/version.hpp"

namespace ctpipe::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Published full-scale Snapshot Serengeti baselines. Reference values for
// report context only; nothing at desk scale reproduces them.
struct ReferenceBaselines {
  double stage1_top1 = 0.968;       // best single model, empty vs animal
  double species_top1 = 0.949;      // ensemble
  double species_top5 = 0.991;      // ensemble
  double count_top1 = 0.631;        // ensemble
  double count_within_one = 0.847;  // ensemble
  double attr_accuracy = 0.762;     // ensemble, pooled
  double attr_precision = 0.861;
  double attr_recall = 0.811;
  double automated_species = 0.993;  // at 96.6% human-level accuracy
  double automated_count = 0.861;    // at 90.0% human-level accuracy
};

// every output lands via write-temp-then-rename
template <typename Writer>
void atomic_file(const fs::path& path, Writer&& writer) {
  const fs::path tmp = path.string() + ".tmp";
  writer(tmp);
  fs::rename(tmp, path);
}

void atomic_write_text(const fs::path& path, const std::string& text) {
  atomic_file(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
  });
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get_string("out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw DataError("cannot create output directory '" + dir.string() + "'");
  }
  return dir;
}

SynthConfig synth_config_from(const RunConfig& cfg) {
  SynthConfig s;
  s.n_classes = static_cast<int>(cfg.get_int("n_classes"));
  s.feature_dim = static_cast<int>(cfg.get_int("feature_dim"));
  s.imbalance_exponent = cfg.get_double("imbalance_exponent");
  if (!cfg.get_string("class_frequencies").empty()) {
    s.class_frequencies = cfg.get_double_list("class_frequencies");
  }
  s.empty_fraction = cfg.get_double("empty_fraction");

  const std::string ipe = cfg.get_string("images_per_event");
  if (ipe == "1") {
    s.images_per_event = {1.0, 0.0, 0.0};
  } else if (ipe == "2") {
    s.images_per_event = {0.0, 1.0, 0.0};
  } else if (ipe == "3") {
    s.images_per_event = {0.0, 0.0, 1.0};
  } else {
    const auto probs = cfg.get_double_list("images_per_event");
    if (probs.size() != 3) {
      throw ConfigError("images_per_event: expected \"1\"/\"2\"/\"3\" or three probabilities");
    }
    s.images_per_event = {probs[0], probs[1], probs[2]};
  }

  s.noise_rate = cfg.get_double("noise_rate");
  s.n_events = static_cast<int>(cfg.get_int("n_events"));
  s.seed = cfg.get_u64("seed");
  s.class_separation = cfg.get_double("class_separation");

  const auto marginals = cfg.get_double_list("attribute_marginals");
  if (marginals.size() != 6) throw ConfigError("attribute_marginals: expected six values");
  std::copy(marginals.begin(), marginals.end(), s.attribute_marginals.begin());
  return s;
}

std::vector<ScheduleRow> parse_schedule(const std::string& text) {
  std::vector<ScheduleRow> rows;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    ScheduleRow row;
    int fields = 0;
    std::string range, lr, wd;
    std::stringstream ps(part);
    if (std::getline(ps, range, ':') && std::getline(ps, lr, ':') && std::getline(ps, wd)) {
      const auto dash = range.find('-');
      try {
        if (dash == std::string::npos) {
          row.first_epoch = row.last_epoch = std::stoi(range);
        } else {
          row.first_epoch = std::stoi(range.substr(0, dash));
          row.last_epoch = std::stoi(range.substr(dash + 1));
        }
        row.learning_rate = std::stod(lr);
        row.weight_decay = std::stod(wd);
        fields = 3;
      } catch (const std::exception&) {
        fields = 0;
      }
    }
    if (fields != 3) {
      throw ConfigError("schedule: cannot parse row '" + part + "' (want first-last:lr:wd)");
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ConfigError("schedule: no rows");
  return rows;
}

TrainConfig train_config_from(const RunConfig& cfg, std::uint64_t member_seed) {
  TrainConfig t;
  t.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  t.momentum = cfg.get_double("momentum");
  t.epochs = static_cast<int>(cfg.get_int("epochs"));
  t.epoch_size = static_cast<int>(cfg.get_int("epoch_size"));

  const std::string schedule = cfg.get_string("schedule");
  if (!schedule.empty()) {
    t.schedule = parse_schedule(schedule);
  } else if (t.epochs == 55) {
    t.schedule = default_schedule();
  } else {
    t.schedule = uniform_schedule(t.epochs, cfg.get_double("learning_rate"),
                                  cfg.get_double("weight_decay"));
  }

  const double clamp = cfg.get_double("grad_clamp");
  if (clamp > 0.0) t.grad_clamp = clamp;

  t.seed = member_seed;
  t.hidden = cfg.get_int_list("hidden");

  const std::string act = cfg.get_string("activation");
  if (act == "tanh") {
    t.activation = Activation::tanh_fn;
  } else if (act == "relu") {
    t.activation = Activation::relu;
  } else {
    throw ConfigError("activation: expected tanh or relu, got '" + act + "'");
  }

  const std::string method = cfg.get_string("imbalance");
  if (method == "none") {
    t.imbalance = ImbalanceMethod::none;
  } else if (method == "weighted_loss") {
    t.imbalance = ImbalanceMethod::weighted_loss;
  } else if (method == "oversample") {
    t.imbalance = ImbalanceMethod::oversample;
  } else if (method == "emphasis") {
    t.imbalance = ImbalanceMethod::emphasis;
  } else {
    throw ConfigError("imbalance: expected none|weighted_loss|oversample|emphasis, got '" + method +
                      "'");
  }
  t.weight_all_heads = cfg.get_bool("weight_all_heads");
  t.emphasis_p_top1 = cfg.get_double("emphasis_p_top1");
  t.emphasis_p_top5 = cfg.get_double("emphasis_p_top5");
  t.validate();
  return t;
}

HeadMode stage_mode(const std::string& stage) {
  if (stage == "stage1") return HeadMode::binary;
  if (stage == "stage2") return HeadMode::multitask;
  if (stage == "one_stage") return HeadMode::one_stage;
  throw ConfigError("stage: expected stage1|stage2|one_stage, got '" + stage + "'");
}

// The event-split prep chain shared by train and eval so both sides see the
// same data for the same config.
struct PreparedData {
  Dataset train;
  Dataset test;
  int n_species = 0;
};

PreparedData prepare_dataset(const RunConfig& cfg, HeadMode mode) {
  const std::string manifest = cfg.get_string("manifest");
  if (manifest.empty()) throw ConfigError("manifest: required");
  Dataset d = load_manifest(manifest);
  const int n_species = d.taxonomy().size();

  const FilterResult filtered = filter_single_species(d);
  if (filtered.removed_events > 0) {
    std::cout << "dropped " << filtered.removed_events << " multi-species events ("
              << filtered.removed_fraction << ")\n";
  }
  d = filtered.dataset;

  const std::uint64_t seed = cfg.get_u64("seed");
  if (mode == HeadMode::binary && cfg.get_bool("balance_stage1")) {
    const BalanceResult balanced = balance_empty(d, seed);
    if (balanced.shortfall) std::cout << "warning: " << balanced.warning << "\n";
    d = balanced.dataset;
  } else if (mode == HeadMode::one_stage) {
    const auto& per_class = d.stats().images_per_class;
    const std::size_t largest =
        per_class.empty() ? 0 : *std::max_element(per_class.begin(), per_class.end());
    if (largest > 0) {
      const BalanceResult capped = subsample_empty(d, largest, seed);
      if (capped.shortfall) std::cout << "warning: " << capped.warning << "\n";
      d = capped.dataset;
    }
  }

  auto [train, test] = split_by_event(d, SplitSpec{cfg.get_double("train_fraction"), seed});
  return PreparedData{std::move(train), std::move(test), n_species};
}

HeadLayout layout_for(HeadMode mode, int n_species) {
  HeadLayout layout;
  layout.mode = mode;
  layout.n_species = n_species;
  return layout;
}

std::unique_ptr<BatchSource> make_sampler(const TrainConfig& t, const HeadLayout& layout,
                                          const TrainingSet& train, std::uint64_t sampler_seed) {
  const auto batch = static_cast<std::size_t>(t.batch_size);
  switch (t.imbalance) {
    case ImbalanceMethod::oversample:
      return std::make_unique<OversampleSampler>(class_keys(train, layout), n_class_keys(layout),
                                                 batch, sampler_seed);
    case ImbalanceMethod::emphasis:
      return std::make_unique<EmphasisSampler>(train.size(), batch, sampler_seed, train.size(),
                                               t.emphasis_p_top1, t.emphasis_p_top5);
    case ImbalanceMethod::none:
    case ImbalanceMethod::weighted_loss:
      return std::make_unique<UniformSampler>(train.size(), batch, sampler_seed);
  }
  throw ConfigError("unknown imbalance method");
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,learning_rate,weight_decay,mean_train_loss,test_accuracy\n";
  out.precision(17);
  for (const auto& row : log) {
    out << row.epoch << ',' << row.learning_rate << ',' << row.weight_decay << ','
        << row.mean_train_loss << ',' << row.test_accuracy << '\n';
  }
  return out.str();
}

struct MemberResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

MemberResult train_member(const RunConfig& cfg, const HeadLayout& layout,
                          const TrainingSet& train, const TrainingSet& test,
                          std::optional<ChannelStats> stats, std::uint64_t member_seed) {
  const TrainConfig t = train_config_from(cfg, member_seed);
  HeadWeights weights = t.imbalance == ImbalanceMethod::weighted_loss
                            ? make_head_weights(layout, train, t.weight_all_heads)
                            : no_head_weights(layout);
  auto sampler = make_sampler(t, layout, train, member_seed ^ 0x5eedbeefULL);
  ModelState state = init_state(layout, train.feature_dim, t);
  state = fit(std::move(state), train, test, t, *sampler, weights);

  MemberResult result;
  result.log = state.log;
  result.checkpoint = Checkpoint::from_state(state, t, std::move(stats));
  return result;
}

// predictions for one member, normalizing with the member's own stats
std::vector<ModelOutput> member_predictions(const Checkpoint& ckpt, const TrainingSet& raw) {
  const Network net = ckpt.to_network();
  std::vector<std::vector<double>> features = raw.features;
  if (ckpt.feature_stats) {
    for (auto& f : features) f = normalize_features(f, *ckpt.feature_stats);
  }
  return predict_batch(net, features);
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
  const fs::path out_dir = ensure_out_dir(cfg);
  const SynthConfig synth = synth_config_from(cfg);
  const SynthMeta meta = synth_meta(synth);

  const Dataset d = generate(synth);

  const fs::path manifest_path = out_dir / "manifest.jsonl";
  atomic_file(manifest_path, [&](const fs::path& tmp) { save_manifest(d, tmp); });

  // generation metadata for oracle use, next to the manifest
  json meta_json;
  meta_json["class_probs"] = meta.class_probs;
  meta_json["class_centers"] = meta.class_centers;
  meta_json["empty_center"] = meta.empty_center;
  meta_json["count_bin_probs"] = meta.count_bin_probs;
  meta_json["attribute_marginals"] = meta.attribute_marginals;
  atomic_write_text(out_dir / "manifest.meta.json", meta_json.dump(2) + "\n");

  // summary recomputed from the generated dataset
  const auto& stats = d.stats();
  json summary;
  summary["n_events"] = stats.n_events;
  summary["n_images"] = stats.n_images;
  summary["empty_event_fraction"] = stats.empty_event_fraction();
  summary["empty_image_fraction"] = stats.empty_image_fraction();
  json hist = json::object();
  for (int c = 0; c < d.taxonomy().size(); ++c) {
    hist[d.taxonomy().name(c)] = stats.events_per_class[static_cast<std::size_t>(c)];
  }
  summary["events_per_class"] = hist;
  atomic_write_text(out_dir / "synth_summary.json", summary.dump(2) + "\n");

  cfg.write_resolved(out_dir / "synth_config.json", "synth");

  std::cout << "wrote " << manifest_path.string() << ": " << stats.n_events << " events, "
            << stats.n_images << " images, empty fraction " << stats.empty_event_fraction()
            << "\nevents per class:";
  for (int c = 0; c < d.taxonomy().size(); ++c) {
    std::cout << ' ' << d.taxonomy().name(c) << '=' << stats.events_per_class[static_cast<std::size_t>(c)];
  }
  std::cout << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path out_dir = ensure_out_dir(cfg);
  const HeadMode mode = stage_mode(cfg.get_string("stage"));
  const PreparedData data = prepare_dataset(cfg, mode);
  const HeadLayout layout = layout_for(mode, data.n_species);

  TrainingSet train_raw = make_training_set(data.train, mode);
  TrainingSet test_raw = make_training_set(data.test, mode);
  if (train_raw.size() == 0) throw DataError("train: empty training set after preparation");
  if (test_raw.size() == 0) throw DataError("train: empty test set after preparation");

  std::optional<ChannelStats> stats;
  TrainingSet train = train_raw;
  TrainingSet test = test_raw;
  if (cfg.get_bool("normalize_features")) {
    stats = feature_stats(train_raw.features);
    train = make_training_set(data.train, mode, &*stats);
    test = make_training_set(data.test, mode, &*stats);
  }

  const auto members = static_cast<int>(cfg.get_int("ensemble_members"));
  if (members < 1) throw ConfigError("ensemble_members: must be >= 1");
  const std::uint64_t seed = cfg.get_u64("seed");

  std::vector<std::future<MemberResult>> futures;
  futures.reserve(static_cast<std::size_t>(members));
  for (int m = 0; m < members; ++m) {
    futures.push_back(std::async(std::launch::async, [&, m]() {
      return train_member(cfg, layout, train, test, stats, seed + static_cast<std::uint64_t>(m));
    }));
  }

  for (int m = 0; m < members; ++m) {
    MemberResult result = futures[static_cast<std::size_t>(m)].get();
    const fs::path ckpt_path = out_dir / ("checkpoint_" + std::to_string(m) + ".json");
    atomic_file(ckpt_path,
                [&](const fs::path& tmp) { save_checkpoint(result.checkpoint, tmp); });
    atomic_write_text(out_dir / ("train_log_" + std::to_string(m) + ".csv"),
                      epoch_log_csv(result.log));
    std::cout << "member " << m << ": best test accuracy " << result.checkpoint.best_accuracy
              << " at epoch " << result.checkpoint.best_epoch << " -> " << ckpt_path.string()
              << '\n';
  }

  cfg.write_resolved(out_dir / "train_config.json", "train");
  return 0;
}

namespace {

struct EventGroup {
  std::string event_id;
  std::vector<std::size_t> rows;
};

std::vector<EventGroup> group_by_event(const TrainingSet& ts) {
  std::vector<EventGroup> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& ev = ts.event_ids[i];
    auto it = index.find(ev);
    if (it == index.end()) {
      index.emplace(ev, groups.size());
      groups.push_back(EventGroup{ev, {i}});
    } else {
      groups[it->second].rows.push_back(i);
    }
  }
  return groups;
}

double binary_accuracy(const std::vector<BinaryPrediction>& preds, const std::vector<Target>& targets) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool predicted_animal = preds[i].p_animal >= preds[i].p_empty;
    if (predicted_animal == !targets[i].empty) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

int cmd_eval(const RunConfig& cfg) {
  const fs::path out_dir = ensure_out_dir(cfg);
  const auto ckpt_paths = cfg.get_string_list("checkpoints");
  if (ckpt_paths.empty()) throw ConfigError("checkpoints: required");

  std::vector<Checkpoint> members;
  for (const auto& p : ckpt_paths) members.push_back(load_checkpoint(p));
  const HeadLayout layout = members[0].layout;
  for (const auto& m : members) {
    if (!(m.layout == layout) || m.input_dim != members[0].input_dim) {
      throw DataError("eval: checkpoints disagree on layout or input dimension");
    }
  }

  const PreparedData data = prepare_dataset(cfg, layout.mode);
  if (layout.n_species != data.n_species &&
      !(layout.mode == HeadMode::binary)) {
    throw DataError("eval: checkpoint species count (" + std::to_string(layout.n_species) +
                    ") does not match the manifest taxonomy (" + std::to_string(data.n_species) +
                    ")");
  }
  const TrainingSet test = make_training_set(data.test, layout.mode);
  if (test.size() == 0) throw DataError("eval: empty test set");
  if (test.feature_dim != members[0].input_dim) {
    throw DataError("eval: feature dimension does not match the checkpoints");
  }

  // per-member raw outputs
  std::vector<std::vector<ModelOutput>> outputs;
  outputs.reserve(members.size());
  for (const auto& m : members) outputs.push_back(member_predictions(m, test));

  const auto groups = group_by_event(test);
  const bool multi_image_events =
      std::any_of(groups.begin(), groups.end(), [](const EventGroup& g) { return g.rows.size() > 1; });

  json result;
  result["tool_version"] = kVersion;
  result["n_models"] = members.size();
  result["n_examples"] = test.size();
  std::vector<PredictionRecord> prediction_records;

  if (layout.mode == HeadMode::multitask) {
    // member + ensemble multitask predictions
    std::vector<std::vector<MultiTaskPrediction>> member_preds(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      member_preds[m].reserve(test.size());
      for (const auto& out : outputs[m]) member_preds[m].push_back(out.to_multitask());
    }
    std::vector<MultiTaskPrediction> ensemble;
    ensemble.reserve(test.size());
    std::vector<LabelSet> labels;
    labels.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      std::vector<MultiTaskPrediction> at_i;
      at_i.reserve(members.size());
      for (std::size_t m = 0; m < members.size(); ++m) at_i.push_back(member_preds[m][i]);
      ensemble.push_back(average_predictions(at_i));

      const Target& t = test.targets[i];
      AttributeSet attrs;
      for (int a = 0; a < AttributeSet::kAttributes; ++a) {
        attrs.set_flag(a, t.attributes[static_cast<std::size_t>(a)]);
      }
      labels.push_back(LabelSet::animal(t.species, CountBin{t.count_bin},
                                        t.has_attributes ? std::optional<AttributeSet>(attrs)
                                                         : std::nullopt));
    }

    const auto class_names = data.test.taxonomy().names();
    for (std::size_t m = 0; m < members.size(); ++m) {
      const EvalReport r = build_report(member_preds[m], labels, layout.n_species);
      atomic_file(out_dir / ("eval_member_" + std::to_string(m) + ".json"),
                  [&](const fs::path& tmp) { write_report_json(tmp, r, class_names); });
    }

    const EvalReport image_report = build_report(ensemble, labels, layout.n_species);
    atomic_file(out_dir / "eval_image.json",
                [&](const fs::path& tmp) { write_report_json(tmp, image_report, class_names); });
    atomic_file(out_dir / "confusion_image.csv", [&](const fs::path& tmp) {
      write_confusion_csv(tmp, image_report.confusion, class_names);
    });
    atomic_file(out_dir / "per_class_image.csv", [&](const fs::path& tmp) {
      write_per_class_csv(tmp, image_report, class_names);
    });
    result["image"] = json::parse(report_to_json(image_report, class_names));

    if (multi_image_events) {
      std::vector<MultiTaskPrediction> event_preds;
      std::vector<LabelSet> event_labels;
      std::vector<PredictionRecord> event_records;
      for (const auto& g : groups) {
        std::vector<MultiTaskPrediction> images;
        for (std::size_t row : g.rows) images.push_back(ensemble[row]);
        MultiTaskPrediction agg = aggregate_event(images);
        event_labels.push_back(labels[g.rows.front()]);
        event_records.push_back({g.event_id, true, "species", agg.species_probs});
        event_records.push_back({g.event_id, true, "count", agg.count_probs});
        event_records.push_back({g.event_id, true, "attributes", agg.attribute_probs});
        event_preds.push_back(std::move(agg));
      }
      const EvalReport event_report = build_report(event_preds, event_labels, layout.n_species);
      atomic_file(out_dir / "eval_event.json",
                  [&](const fs::path& tmp) { write_report_json(tmp, event_report, class_names); });
      result["event"] = json::parse(report_to_json(event_report, class_names));
      if (cfg.get_bool("write_predictions")) {
        atomic_file(out_dir / "predictions_event.jsonl",
                    [&](const fs::path& tmp) { write_predictions(tmp, event_records); });
      }
    }

    for (std::size_t i = 0; i < test.size(); ++i) {
      prediction_records.push_back({test.image_ids[i], false, "species", ensemble[i].species_probs});
      prediction_records.push_back({test.image_ids[i], false, "count", ensemble[i].count_probs});
      prediction_records.push_back(
          {test.image_ids[i], false, "attributes", ensemble[i].attribute_probs});
    }

    // composed two-stage pipeline when stage-1 checkpoints are provided
    const auto stage1_paths = cfg.get_string_list("stage1_checkpoints");
    if (!stage1_paths.empty()) {
      std::vector<Checkpoint> stage1;
      for (const auto& p : stage1_paths) stage1.push_back(load_checkpoint(p));
      for (const auto& s : stage1) {
        if (s.layout.mode != HeadMode::binary) {
          throw DataError("eval: stage1_checkpoints must hold binary-stage models");
        }
      }
      // stage 1 screens every test image (empty ones included)
      const TrainingSet all_images = make_training_set(data.test, HeadMode::binary);
      std::vector<BinaryPrediction> gate(all_images.size(), BinaryPrediction{0.0, 0.0});
      for (const auto& s : stage1) {
        const auto outs = member_predictions(s, all_images);
        for (std::size_t i = 0; i < outs.size(); ++i) {
          gate[i].p_animal += outs[i].to_binary().p_animal / static_cast<double>(stage1.size());
          gate[i].p_empty += outs[i].to_binary().p_empty / static_cast<double>(stage1.size());
        }
      }
      std::map<std::string, std::size_t> row_of_image;
      for (std::size_t i = 0; i < test.size(); ++i) row_of_image[test.image_ids[i]] = i;

      std::size_t correct = 0;
      for (std::size_t i = 0; i < all_images.size(); ++i) {
        const bool says_animal = gate[i].p_animal >= gate[i].p_empty;
        const Target& truth = all_images.targets[i];
        if (!says_animal) {
          if (truth.empty) ++correct;
          continue;
        }
        if (truth.empty) continue;  // gate passed an empty image: wrong
        const auto row = row_of_image.find(all_images.image_ids[i]);
        if (row == row_of_image.end()) continue;
        if (argmax(ensemble[row->second].species_probs) == truth.species) ++correct;
      }
      json pipeline;
      pipeline["stage1_accuracy"] = binary_accuracy(gate, all_images.targets);
      pipeline["total_accuracy"] =
          static_cast<double>(correct) / static_cast<double>(all_images.size());
      result["pipeline"] = pipeline;
    }
  } else if (layout.mode == HeadMode::binary) {
    std::vector<BinaryPrediction> ensemble(test.size(), BinaryPrediction{0.0, 0.0});
    for (std::size_t m = 0; m < members.size(); ++m) {
      for (std::size_t i = 0; i < test.size(); ++i) {
        ensemble[i].p_animal += outputs[m][i].to_binary().p_animal / static_cast<double>(members.size());
        ensemble[i].p_empty += outputs[m][i].to_binary().p_empty / static_cast<double>(members.size());
      }
    }
    const double acc = binary_accuracy(ensemble, test.targets);
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth animal=0/empty=1][predicted]
    for (std::size_t i = 0; i < test.size(); ++i) {
      const int truth = test.targets[i].empty ? 1 : 0;
      const int predicted = ensemble[i].p_animal >= ensemble[i].p_empty ? 0 : 1;
      ++confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    }
    json image;
    image["accuracy"] = acc;
    image["confusion"] = {{confusion[0][0], confusion[0][1]}, {confusion[1][0], confusion[1][1]}};
    result["image"] = image;
    atomic_write_text(out_dir / "eval_image.json", image.dump(2) + "\n");

    if (multi_image_events) {
      std::vector<BinaryPrediction> event_preds;
      std::vector<Target> event_targets;
      for (const auto& g : groups) {
        std::vector<BinaryPrediction> images;
        for (std::size_t row : g.rows) images.push_back(ensemble[row]);
        event_preds.push_back(aggregate_event_binary(images));
        event_targets.push_back(test.targets[g.rows.front()]);
      }
      json event;
      event["accuracy"] = binary_accuracy(event_preds, event_targets);
      result["event"] = event;
      atomic_write_text(out_dir / "eval_event.json", event.dump(2) + "\n");
    }

    for (std::size_t i = 0; i < test.size(); ++i) {
      prediction_records.push_back({test.image_ids[i], false, "binary",
                                    {ensemble[i].p_animal, ensemble[i].p_empty}});
    }
  } else {  // one_stage
    std::vector<std::vector<double>> ensemble(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      std::vector<std::vector<double>> at_i;
      for (std::size_t m = 0; m < members.size(); ++m) at_i.push_back(outputs[m][i].one_stage());
      ensemble[i] = average_distributions(at_i);
    }
    const int empty_class = layout.n_species;
    std::size_t total_correct = 0, gate_correct = 0, id_correct = 0, animals = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Target& t = test.targets[i];
      const int truth = t.empty ? empty_class : t.species;
      const int predicted = argmax(ensemble[i]);
      if (predicted == truth) ++total_correct;
      if ((predicted == empty_class) == t.empty) ++gate_correct;
      if (!t.empty) {
        ++animals;
        const std::span<const double> species_slice(ensemble[i].data(),
                                                    static_cast<std::size_t>(layout.n_species));
        if (argmax(species_slice) == t.species) ++id_correct;
      }
    }
    json image;
    image["total_accuracy"] = static_cast<double>(total_correct) / static_cast<double>(test.size());
    image["empty_vs_animal_accuracy"] =
        static_cast<double>(gate_correct) / static_cast<double>(test.size());
    image["identification_accuracy"] =
        animals ? static_cast<double>(id_correct) / static_cast<double>(animals) : 0.0;
    result["image"] = image;
    atomic_write_text(out_dir / "eval_image.json", image.dump(2) + "\n");

    for (std::size_t i = 0; i < test.size(); ++i) {
      prediction_records.push_back({test.image_ids[i], false, "one_stage", ensemble[i]});
    }
  }

  if (cfg.get_bool("write_predictions")) {
    atomic_file(out_dir / "predictions_image.jsonl",
                [&](const fs::path& tmp) { write_predictions(tmp, prediction_records); });
  }

  atomic_write_text(out_dir / "eval_summary.json", result.dump(2) + "\n");
  cfg.write_resolved(out_dir / "eval_config.json", "eval");

  std::cout << "evaluated " << test.size() << " images with " << members.size() << " model(s)\n";
  if (result.contains("image") && result["image"].contains("species_top1")) {
    std::cout << "species top-1 " << result["image"]["species_top1"].get<double>() << ", top-5 "
              << result["image"]["species_top5"].get<double>() << '\n';
  }
  return 0;
}

namespace {

struct JoinedPredictions {
  std::vector<MultiTaskPrediction> multitask;
  std::vector<LabelSet> multitask_labels;
  std::vector<BinaryPrediction> binary;
  std::vector<LabelSet> binary_labels;
};

JoinedPredictions join_predictions(const std::vector<PredictionRecord>& records, const Dataset& d) {
  std::map<std::string, LabelSet> label_of;
  for (const auto& e : d.events()) {
    for (const auto& img : e.images) label_of[img.image_id] = img.label;
    label_of[e.event_id] = e.label;
  }

  struct Partial {
    MultiTaskPrediction p;
    bool has_species = false, has_count = false;
  };
  std::map<std::string, Partial> partials;
  JoinedPredictions out;

  for (const auto& r : records) {
    const auto label_it = label_of.find(r.id);
    if (label_it == label_of.end()) continue;  // prediction for an id outside this manifest
    if (r.head == "binary") {
      if (r.probs.size() != 2) throw DataError("sweep: binary record needs two probabilities");
      out.binary.push_back(BinaryPrediction{r.probs[0], r.probs[1]});
      out.binary_labels.push_back(label_it->second);
    } else if (r.head == "species") {
      partials[r.id].p.species_probs = r.probs;
      partials[r.id].has_species = true;
    } else if (r.head == "count") {
      partials[r.id].p.count_probs = r.probs;
      partials[r.id].has_count = true;
    } else if (r.head == "attributes") {
      partials[r.id].p.attribute_probs = r.probs;
    }
  }
  for (auto& [id, partial] : partials) {
    if (!partial.has_species || !partial.has_count) continue;
    const LabelSet& label = label_of.at(id);
    if (label.empty) continue;
    out.multitask.push_back(std::move(partial.p));
    out.multitask_labels.push_back(label);
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  // start:end:step
  double start = 0.0, end = 0.99, step = 0.01;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &end, &step) != 3 || step <= 0.0 ||
      end < start) {
    throw ConfigError("threshold_grid: expected start:end:step with step > 0");
  }
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    // rounded so grid values print cleanly in the CSV outputs
    const double t = std::round((start + step * i) * 1e9) / 1e9;
    if (t > end + 1e-12) break;
    grid.push_back(t);
  }
  return grid;
}

json summary_json(const AutomationSummary& s, const char* task) {
  return json{{"task", task},
              {"attainable", true},
              {"matched_threshold", s.matched_threshold},
              {"automated_fraction_of_stage", s.automated_fraction_of_stage},
              {"total_automated_fraction", s.total_automated_fraction},
              {"target_accuracy", s.target_accuracy}};
}

json unattainable_json(const char* task, double target, double max_achievable) {
  return json{{"task", task},
              {"attainable", false},
              {"target_accuracy", target},
              {"max_achievable_accuracy", max_achievable}};
}

}  // namespace

int cmd_sweep(const RunConfig& cfg) {
  const fs::path out_dir = ensure_out_dir(cfg);
  const auto grid = parse_grid(cfg.get_string("threshold_grid"));

  const double species_target = cfg.get_double("species_target");
  const double count_target = cfg.get_double("count_target");
  const double stage1_human = cfg.get_double("stage1_human_accuracy");

  double empty_fraction = cfg.get_double("empty_fraction");
  std::optional<Dataset> dataset;
  if (!cfg.get_string("manifest").empty()) {
    dataset = load_manifest(cfg.get_string("manifest"));
    empty_fraction = dataset->stats().empty_image_fraction();
  }

  double stage1_auto = cfg.get_double("stage1_auto_fraction");
  double species_auto = cfg.get_double("species_auto_fraction");
  double count_auto = cfg.get_double("count_auto_fraction");
  std::string stage1_source = stage1_auto >= 0.0 ? "config" : "assumed";

  json summaries = json::array();

  if (!cfg.get_string("predictions").empty()) {
    if (!dataset) throw ConfigError("sweep: manifest is required to label the predictions");
    const auto records = read_predictions(cfg.get_string("predictions"));
    const JoinedPredictions joined = join_predictions(records, *dataset);

    if (!joined.multitask.empty()) {
      const auto species_examples =
          make_sweep_examples(joined.multitask, joined.multitask_labels, SweepMetric::top1);
      const ThresholdCurve species_curve = sweep(species_examples, grid);
      atomic_file(out_dir / "curve_species.csv",
                  [&](const fs::path& tmp) { write_curve_csv(tmp, species_curve); });
      atomic_file(out_dir / "curve_species.svg", [&](const fs::path& tmp) {
        write_curve_svg(tmp, species_curve, "species confidence sweep");
      });

      const auto count_conf_examples =
          make_sweep_examples(joined.multitask, joined.multitask_labels, SweepMetric::within_one_bin);
      const ThresholdCurve count_curve = sweep(count_conf_examples, grid);
      atomic_file(out_dir / "curve_count.csv",
                  [&](const fs::path& tmp) { write_curve_csv(tmp, count_curve); });
      atomic_file(out_dir / "curve_count.svg", [&](const fs::path& tmp) {
        write_curve_svg(tmp, count_curve, "count confidence sweep");
      });

      if (species_auto < 0.0) {
        try {
          const auto s = match_human(species_examples, species_target, grid, AutomationTask::species);
          species_auto = s.automated_fraction_of_stage;
          summaries.push_back(summary_json(s, "species"));
        } catch (const UnattainableError& e) {
          summaries.push_back(unattainable_json("species", species_target, e.max_achievable));
        }
      }
      if (count_auto < 0.0) {
        try {
          const auto s = match_human(count_conf_examples, count_target, grid, AutomationTask::count);
          count_auto = s.automated_fraction_of_stage;
          summaries.push_back(summary_json(s, "count"));
        } catch (const UnattainableError& e) {
          summaries.push_back(unattainable_json("count", count_target, e.max_achievable));
        }
      }
    }

    if (!joined.binary.empty() && stage1_auto < 0.0) {
      const auto stage1_examples = make_sweep_examples_binary(joined.binary, joined.binary_labels);
      const ThresholdCurve stage1_curve = sweep(stage1_examples, grid);
      atomic_file(out_dir / "curve_stage1.csv",
                  [&](const fs::path& tmp) { write_curve_csv(tmp, stage1_curve); });
      atomic_file(out_dir / "curve_stage1.svg", [&](const fs::path& tmp) {
        write_curve_svg(tmp, stage1_curve, "stage-1 confidence sweep");
      });

      std::size_t correct = 0;
      for (const auto& e : stage1_examples) correct += e.primary_correct;
      const double overall = static_cast<double>(correct) / static_cast<double>(stage1_examples.size());
      if (overall >= stage1_human) {
        // the model beats the assumed human accuracy outright, so the whole
        // stage is automated with no thresholding
        stage1_auto = 1.0;
        stage1_source = "model_accuracy_above_human";
      } else {
        try {
          const auto s =
              match_human(stage1_examples, stage1_human, grid, AutomationTask::stage1_binary);
          stage1_auto = s.automated_fraction_of_stage;
          stage1_source = "threshold_match";
          summaries.push_back(summary_json(s, "stage1"));
        } catch (const UnattainableError& e) {
          summaries.push_back(unattainable_json("stage1", stage1_human, e.max_achievable));
        }
      }
    }
  }

  if (stage1_auto < 0.0) stage1_auto = 1.0;  // stage 1 assumed automated at human level

  json totals;
  totals["empty_fraction"] = empty_fraction;
  totals["stage1_auto_fraction"] = stage1_auto;
  totals["stage1_auto_fraction_source"] = stage1_source;

  const LaborModel labor{cfg.get_double("baseline_hours"), cfg.get_double("baseline_images"),
                         cfg.get_double("corpus_images"), cfg.get_double("hours_per_week")};

  auto set_summary_total = [&summaries](const char* task, double total) {
    for (auto& s : summaries) {
      if (s["task"] == task && s["attainable"].get<bool>()) {
        s["total_automated_fraction"] = total;
      }
    }
  };

  if (species_auto >= 0.0) {
    const double total = compose_two_stage(empty_fraction, stage1_auto, species_auto);
    totals["species_auto_fraction"] = species_auto;
    totals["species_total_automated_fraction"] = total;
    set_summary_total("species", total);
    const LaborSavings s = labor_savings(labor, total);
    totals["species_hours_saved"] = s.hours_saved;
    totals["species_person_years_saved"] = s.person_years_saved;
    std::printf("species pipeline: %.1f%% of the data automated, %.0f hours (%.2f person-years) saved\n",
                100.0 * total, s.hours_saved, s.person_years_saved);
  }
  if (count_auto >= 0.0) {
    const double total = compose_two_stage(empty_fraction, stage1_auto, count_auto);
    totals["count_auto_fraction"] = count_auto;
    totals["count_total_automated_fraction"] = total;
    set_summary_total("count", total);
    std::printf("count pipeline: %.1f%% of the data automated\n", 100.0 * total);
  }

  json out;
  out["tool_version"] = kVersion;
  out["summaries"] = summaries;
  out["totals"] = totals;
  atomic_write_text(out_dir / "automation_summary.json", out.dump(2) + "\n");
  cfg.write_resolved(out_dir / "sweep_config.json", "sweep");
  return 0;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
  return buf;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

}  // namespace

int cmd_report(const RunConfig& cfg) {
  const fs::path out_dir = ensure_out_dir(cfg);
  const ReferenceBaselines ref;

  std::ostringstream md;
  md << "# Pipeline report\n\n";

  if (!cfg.get_string("eval_report").empty()) {
    const json eval = load_json_file(cfg.get_string("eval_report"));
    md << "## Image-level results (this run)\n\n";
    if (eval.contains("species_top1")) {
      md << "| metric | value |\n|---|---|\n";
      md << "| species top-1 | " << pct(eval["species_top1"].get<double>()) << " |\n";
      md << "| species top-5 | " << pct(eval["species_top5"].get<double>()) << " |\n";
      md << "| count top-1 | " << pct(eval["count_top1"].get<double>()) << " |\n";
      md << "| count within ±1 bin | " << pct(eval["count_within_one_bin"].get<double>()) << " |\n";
      if (!eval["multilabel"].is_null()) {
        md << "| attributes accuracy | " << pct(eval["multilabel"]["accuracy"].get<double>()) << " |\n";
        md << "| attributes precision | " << pct(eval["multilabel"]["precision"].get<double>()) << " |\n";
        md << "| attributes recall | " << pct(eval["multilabel"]["recall"].get<double>()) << " |\n";
      }
      md << "| examples | " << eval["n_examples"].get<std::size_t>() << " |\n\n";
    } else if (eval.contains("accuracy")) {
      md << "binary accuracy: " << pct(eval["accuracy"].get<double>()) << "\n\n";
    } else if (eval.contains("total_accuracy")) {
      md << "one-stage total accuracy: " << pct(eval["total_accuracy"].get<double>())
         << ", empty-vs-animal: " << pct(eval["empty_vs_animal_accuracy"].get<double>())
         << ", identification: " << pct(eval["identification_accuracy"].get<double>()) << "\n\n";
    }
  }

  if (!cfg.get_string("event_report").empty()) {
    const json event = load_json_file(cfg.get_string("event_report"));
    md << "## Event-level results (aggregated over capture events)\n\n";
    if (event.contains("species_top1")) {
      md << "species top-1 " << pct(event["species_top1"].get<double>()) << ", top-5 "
         << pct(event["species_top5"].get<double>()) << "\n\n";
    } else if (event.contains("accuracy")) {
      md << "binary accuracy " << pct(event["accuracy"].get<double>()) << "\n\n";
    }
  }

  if (!cfg.get_string("automation").empty()) {
    const json automation = load_json_file(cfg.get_string("automation"));
    md << "## Confidence-threshold automation\n\n";
    const json& totals = automation["totals"];
    if (totals.contains("species_total_automated_fraction")) {
      md << "- species pipeline automates "
         << pct(totals["species_total_automated_fraction"].get<double>()) << " of the data";
      if (totals.contains("species_hours_saved")) {
        md << " (" << static_cast<long long>(totals["species_hours_saved"].get<double>())
           << " hours, " << totals["species_person_years_saved"].get<double>() << " person-years saved)";
      }
      md << "\n";
    }
    if (totals.contains("count_total_automated_fraction")) {
      md << "- count pipeline automates "
         << pct(totals["count_total_automated_fraction"].get<double>()) << " of the data\n";
    }
    for (const auto& s : automation["summaries"]) {
      if (!s["attainable"].get<bool>()) {
        md << "- " << s["task"].get<std::string>() << ": target "
           << pct(s["target_accuracy"].get<double>()) << " unattainable (best "
           << pct(s["max_achievable_accuracy"].get<double>()) << "); stage stays with human labelers\n";
      }
    }
    md << "\n";
  }

  if (!cfg.get_string("one_stage_report").empty() && !cfg.get_string("eval_report").empty()) {
    const json one_stage = load_json_file(cfg.get_string("one_stage_report"));
    const json eval = load_json_file(cfg.get_string("eval_report"));
    if (one_stage.contains("identification_accuracy") && eval.contains("species_top1")) {
      md << "## One-stage vs two-stage (diagnostic)\n\n"
         << "Two-stage species top-1 " << pct(eval["species_top1"].get<double>())
         << " vs one-stage identification " << pct(one_stage["identification_accuracy"].get<double>())
         << ". Directional comparison only; neither number is an acceptance target.\n\n";
    }
  }

  md << "## Full-scale reference baselines\n\n"
     << "Published results for the full 3.2M-image Snapshot Serengeti corpus, quoted for context.\n"
     << "They are **reference values, not reproduced** by this desk-scale run.\n\n"
     << "| metric | reference |\n|---|---|\n"
     << "| stage-1 top-1 (best single model) | " << pct(ref.stage1_top1) << " |\n"
     << "| species top-1 (ensemble) | " << pct(ref.species_top1) << " |\n"
     << "| species top-5 (ensemble) | " << pct(ref.species_top5) << " |\n"
     << "| count top-1 (ensemble) | " << pct(ref.count_top1) << " |\n"
     << "| count within ±1 bin (ensemble) | " << pct(ref.count_within_one) << " |\n"
     << "| attributes accuracy/precision/recall | " << pct(ref.attr_accuracy) << " / "
     << pct(ref.attr_precision) << " / " << pct(ref.attr_recall) << " |\n"
     << "| automated fraction, species pipeline | " << pct(ref.automated_species) << " |\n"
     << "| automated fraction, count pipeline | " << pct(ref.automated_count) << " |\n";

  atomic_write_text(out_dir / "report.md", md.str());
  cfg.write_resolved(out_dir / "report_config.json", "report");
  std::cout << "wrote " << (out_dir / "report.md").string() << '\n';
  return 0;
}

}  // namespace ctpipe::cli
