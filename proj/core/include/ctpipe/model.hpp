#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctpipe/domain.hpp"
#include "ctpipe/imbalance.hpp"
#include "ctpipe/manifest.hpp"
#include "ctpipe/prep.hpp"

namespace ctpipe {

enum class HeadMode { binary, multitask, one_stage };

// Output-head arrangement. binary: one 2-way head (animal, empty).
// multitask: species + count + six 2-way attribute heads. one_stage: one
// (k+1)-way head with empty as the last class.
struct HeadLayout {
  HeadMode mode = HeadMode::multitask;
  int n_species = 48;
  int n_count_bins = CountBin::kBins;
  int n_attributes = AttributeSet::kAttributes;

  struct Head {
    std::string name;
    int classes = 2;
  };

  std::vector<Head> heads() const;
  // class count of the head used for accuracy/checkpoint selection
  int primary_classes() const;
  void validate() const;

  bool operator==(const HeadLayout&) const = default;
};

// In the binary head, class 0 is animal and class 1 is empty.
inline constexpr int kBinaryAnimal = 0;
inline constexpr int kBinaryEmpty = 1;

enum class Activation { tanh_fn, relu };

struct ScheduleRow {
  int first_epoch = 1;
  int last_epoch = 1;
  double learning_rate = 0.01;
  double weight_decay = 0.0;

  bool operator==(const ScheduleRow&) const = default;
};

// The canonical 55-epoch policy (lr 0.01 -> 0.0001, weight decay retired
// after epoch 29).
std::vector<ScheduleRow> default_schedule();
std::vector<ScheduleRow> uniform_schedule(int epochs, double learning_rate, double weight_decay);

struct TrainConfig {
  int batch_size = 128;
  double momentum = 0.9;
  int epochs = 55;
  int epoch_size = 0;  // batches per epoch; 0 = ceil(n_train / batch_size)
  std::vector<ScheduleRow> schedule = default_schedule();
  std::optional<double> grad_clamp;  // symmetric bound on output-layer gradients
  std::uint64_t seed = 0;
  std::vector<int> hidden = {32, 16};
  Activation activation = Activation::tanh_fn;
  ImbalanceMethod imbalance = ImbalanceMethod::none;
  bool weight_all_heads = false;  // extend class weighting to count/attribute heads
  double emphasis_p_top1 = 0.20;
  double emphasis_p_top5 = 0.35;

  void validate() const;
  const ScheduleRow& row_for_epoch(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

// Per-example supervision, decoded once from a LabelSet.
struct Target {
  bool empty = true;
  int species = -1;
  int count_bin = -1;
  std::array<bool, AttributeSet::kAttributes> attributes{};
  bool has_attributes = false;
};

Target target_from_label(const LabelSet& label);

// Flat, classifier-ready view of a dataset: one row per usable image.
// multitask keeps only non-empty images; binary and one_stage keep all.
struct TrainingSet {
  int feature_dim = 0;
  std::vector<std::vector<double>> features;
  std::vector<Target> targets;
  std::vector<std::string> image_ids;
  std::vector<std::string> event_ids;

  std::size_t size() const { return features.size(); }
};

TrainingSet make_training_set(const Dataset& d, HeadMode mode,
                              const ChannelStats* normalize_with = nullptr);

// Class key per example for oversampling: species id (multitask), species or
// k for empty (one_stage), animal/empty (binary).
std::vector<std::size_t> class_keys(const TrainingSet& ts, const HeadLayout& layout);
std::size_t n_class_keys(const HeadLayout& layout);

// Optional per-head loss weights, aligned with HeadLayout::heads().
using HeadWeights = std::vector<std::optional<std::vector<double>>>;

HeadWeights no_head_weights(const HeadLayout& layout);
// weighted_loss: weights on the primary classification head, optionally on
// the count / attribute heads as well (computed from training label counts).
HeadWeights make_head_weights(const HeadLayout& layout, const TrainingSet& train,
                              bool weight_all_heads);

struct LayerParams {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  bool operator==(const LayerParams&) const = default;
};

struct ParamSet {
  std::vector<LayerParams> trunk;
  std::vector<LayerParams> heads;

  bool operator==(const ParamSet&) const = default;
};

ParamSet zeros_like(const ParamSet& p);

struct ModelOutput {
  std::vector<std::vector<double>> head_probs;  // one softmax distribution per head

  BinaryPrediction to_binary() const;
  MultiTaskPrediction to_multitask() const;
  const std::vector<double>& one_stage() const { return head_probs.front(); }
  const std::vector<double>& primary() const { return head_probs.front(); }
};

// Fully connected multi-head network. Trunk of hidden layers feeding one
// linear + softmax layer per head.
class Network {
 public:
  Network() = default;
  Network(HeadLayout layout, int input_dim, std::vector<int> hidden, Activation activation,
          std::uint64_t init_seed);

  const HeadLayout& layout() const { return layout_; }
  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  Activation activation() const { return activation_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ModelOutput forward(std::span<const double> features) const;

  // mean loss over a batch: sum over heads of (optionally class-weighted)
  // cross-entropy
  double example_loss(std::span<const double> features, const Target& target,
                      const HeadWeights& weights) const;
  double batch_loss(const TrainingSet& data, std::span<const std::size_t> batch,
                    const HeadWeights& weights) const;

  struct BackwardResult {
    double mean_loss = 0.0;
    ParamSet grads;
    std::vector<ExampleEval> eval;  // primary-head top-1/top-5 per example
  };
  // Gradients of the mean batch loss; head-layer gradients clamped to
  // [-clamp, clamp] when set.
  BackwardResult backward(const TrainingSet& data, std::span<const std::size_t> batch,
                          const HeadWeights& weights, std::optional<double> clamp) const;

  void apply_sgd_update(const ParamSet& grads, ParamSet& momentum_buffers, double learning_rate,
                        double weight_decay, double momentum);

  bool operator==(const Network&) const = default;

 private:
  HeadLayout layout_;
  int input_dim_ = 0;
  std::vector<int> hidden_;
  Activation activation_ = Activation::tanh_fn;
  ParamSet params_;
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double mean_train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct ModelState {
  Network net;
  ParamSet momentum;
  int epoch = 0;
  std::optional<Network> best;
  double best_accuracy = -1.0;
  int best_epoch = 0;
  std::vector<EpochLog> log;

  const Network& best_or_final() const { return best ? *best : net; }
};

ModelState init_state(const HeadLayout& layout, int input_dim, const TrainConfig& cfg);

// SGD with momentum: v <- momentum*v - lr*(g + wd*w); w <- w + v. Weight
// decay applies to weights only. Evaluates on test each epoch and keeps the
// best-epoch snapshot (primary-head top-1).
ModelState fit(ModelState state, const TrainingSet& train, const TrainingSet& test,
               const TrainConfig& cfg, BatchSource& sampler, const HeadWeights& weights);

// primary-head top-1 accuracy
double evaluate_accuracy(const Network& net, const TrainingSet& data);

std::vector<ModelOutput> predict_batch(const Network& net, const TrainingSet& data);
std::vector<ModelOutput> predict_batch(const Network& net,
                                       const std::vector<std::vector<double>>& features);

// Versioned JSON checkpoint; save/load round-trips are bit-exact.
struct Checkpoint {
  HeadLayout layout;
  int input_dim = 0;
  std::vector<int> hidden;
  Activation activation = Activation::tanh_fn;
  ParamSet params;  // best-epoch snapshot
  double best_accuracy = 0.0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::optional<ChannelStats> feature_stats;

  Network to_network() const;
  static Checkpoint from_state(const ModelState& state, const TrainConfig& cfg,
                               std::optional<ChannelStats> stats);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctpipe
