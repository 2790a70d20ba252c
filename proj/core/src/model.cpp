#include "ctpipe/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctpipe/rng.hpp"
#include "ctpipe/version.hpp"

namespace ctpipe {

using nlohmann::json;

std::vector<HeadLayout::Head> HeadLayout::heads() const {
  switch (mode) {
    case HeadMode::binary:
      return {{"binary", 2}};
    case HeadMode::one_stage:
      return {{"one_stage", n_species + 1}};
    case HeadMode::multitask: {
      std::vector<Head> out;
      out.push_back({"species", n_species});
      out.push_back({"count", n_count_bins});
      for (int i = 0; i < n_attributes; ++i) {
        out.push_back({"attr_" + std::string(AttributeSet::kNames[static_cast<std::size_t>(i)]), 2});
      }
      return out;
    }
  }
  throw ConfigError("head layout: unknown mode");
}

int HeadLayout::primary_classes() const {
  switch (mode) {
    case HeadMode::binary: return 2;
    case HeadMode::multitask: return n_species;
    case HeadMode::one_stage: return n_species + 1;
  }
  throw ConfigError("head layout: unknown mode");
}

void HeadLayout::validate() const {
  if (n_species < 2) throw ConfigError("head layout: n_species must be >= 2");
  if (n_count_bins < 2) throw ConfigError("head layout: n_count_bins must be >= 2");
  if (n_attributes < 0 || n_attributes > AttributeSet::kAttributes) {
    throw ConfigError("head layout: n_attributes out of range");
  }
}

std::vector<ScheduleRow> default_schedule() {
  return {{1, 18, 0.01, 0.0005},
          {19, 29, 0.005, 0.0005},
          {30, 43, 0.001, 0.0},
          {44, 52, 0.0005, 0.0},
          {53, 55, 0.0001, 0.0}};
}

std::vector<ScheduleRow> uniform_schedule(int epochs, double learning_rate, double weight_decay) {
  return {{1, epochs, learning_rate, weight_decay}};
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0, 1)");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (epoch_size < 0) throw ConfigError("train config: epoch_size must be >= 0");
  if (schedule.empty()) throw ConfigError("train config: schedule is empty");
  int expected_first = 1;
  for (const auto& row : schedule) {
    if (row.first_epoch != expected_first) {
      throw ConfigError("train config: schedule has a gap or overlap at epoch " +
                        std::to_string(row.first_epoch));
    }
    if (row.last_epoch < row.first_epoch) {
      throw ConfigError("train config: schedule row range is reversed");
    }
    // lr 0 is allowed as a degenerate diagnostic; negatives are not
    if (row.learning_rate < 0.0) throw ConfigError("train config: learning rate must be >= 0");
    if (row.weight_decay < 0.0) throw ConfigError("train config: weight decay must be >= 0");
    expected_first = row.last_epoch + 1;
  }
  if (expected_first != epochs + 1) {
    throw ConfigError("train config: schedule does not cover epochs 1-" + std::to_string(epochs));
  }
  if (grad_clamp && *grad_clamp <= 0.0) {
    throw ConfigError("train config: grad_clamp must be > 0 when present");
  }
  if (hidden.empty()) throw ConfigError("train config: at least one hidden layer required");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("train config: hidden layer sizes must be >= 1");
  }
  if (emphasis_p_top1 < 0.0 || emphasis_p_top1 > 1.0 || emphasis_p_top5 < 0.0 ||
      emphasis_p_top5 > 1.0) {
    throw ConfigError("train config: emphasis feed probabilities must be in [0, 1]");
  }
}

const ScheduleRow& TrainConfig::row_for_epoch(int epoch) const {
  for (const auto& row : schedule) {
    if (epoch >= row.first_epoch && epoch <= row.last_epoch) return row;
  }
  throw ConfigError("train config: epoch " + std::to_string(epoch) + " not covered by schedule");
}

Target target_from_label(const LabelSet& label) {
  Target t;
  t.empty = label.empty;
  if (label.species) t.species = *label.species;
  if (label.count) t.count_bin = label.count->index;
  if (label.attributes) {
    t.attributes = label.attributes->flags();
    t.has_attributes = true;
  }
  return t;
}

TrainingSet make_training_set(const Dataset& d, HeadMode mode, const ChannelStats* normalize_with) {
  TrainingSet ts;
  for (const auto& e : d.events()) {
    if (mode == HeadMode::multitask && e.label.empty) continue;
    for (const auto& img : e.images) {
      if (ts.feature_dim == 0) {
        ts.feature_dim = static_cast<int>(img.features.size());
      } else if (static_cast<int>(img.features.size()) != ts.feature_dim) {
        throw DataError("training set: inconsistent feature dimensions");
      }
      ts.features.push_back(normalize_with ? normalize_features(img.features, *normalize_with)
                                           : img.features);
      ts.targets.push_back(target_from_label(img.label));
      ts.image_ids.push_back(img.image_id);
      ts.event_ids.push_back(e.event_id);
    }
  }
  return ts;
}

std::size_t n_class_keys(const HeadLayout& layout) {
  return static_cast<std::size_t>(layout.primary_classes());
}

std::vector<std::size_t> class_keys(const TrainingSet& ts, const HeadLayout& layout) {
  std::vector<std::size_t> keys;
  keys.reserve(ts.size());
  for (const auto& t : ts.targets) {
    switch (layout.mode) {
      case HeadMode::binary:
        keys.push_back(t.empty ? static_cast<std::size_t>(kBinaryEmpty)
                               : static_cast<std::size_t>(kBinaryAnimal));
        break;
      case HeadMode::one_stage:
        keys.push_back(t.empty ? static_cast<std::size_t>(layout.n_species)
                               : static_cast<std::size_t>(t.species));
        break;
      case HeadMode::multitask:
        if (t.empty || t.species < 0) throw DataError("class_keys: multitask example lacks species");
        keys.push_back(static_cast<std::size_t>(t.species));
        break;
    }
  }
  return keys;
}

namespace {

// target class for one head; throws on missing label fields
int head_target(const HeadLayout& layout, const Target& t, std::size_t head_idx) {
  switch (layout.mode) {
    case HeadMode::binary:
      return t.empty ? kBinaryEmpty : kBinaryAnimal;
    case HeadMode::one_stage:
      if (t.empty) return layout.n_species;
      if (t.species < 0) throw DataError("loss: missing species label");
      if (t.species >= layout.n_species) throw DataError("loss: species id exceeds head size");
      return t.species;
    case HeadMode::multitask:
      if (head_idx == 0) {
        if (t.empty || t.species < 0) throw DataError("loss: multitask example lacks a species label");
        if (t.species >= layout.n_species) throw DataError("loss: species id exceeds head size");
        return t.species;
      }
      if (head_idx == 1) {
        if (t.count_bin < 0) throw DataError("loss: multitask example lacks a count label");
        if (t.count_bin >= layout.n_count_bins) throw DataError("loss: count bin exceeds head size");
        return t.count_bin;
      }
      if (!t.has_attributes) throw DataError("loss: multitask example lacks attribute labels");
      return t.attributes[head_idx - 2] ? 1 : 0;
  }
  throw ConfigError("head layout: unknown mode");
}

double head_weight(const HeadWeights& weights, std::size_t head_idx, int target_class) {
  if (head_idx >= weights.size() || !weights[head_idx]) return 1.0;
  const auto& w = *weights[head_idx];
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= w.size()) {
    throw DataError("loss: class weight vector does not cover target class");
  }
  return w[static_cast<std::size_t>(target_class)];
}

void linear_forward(const LayerParams& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(layer.out), 0.0);
  for (int r = 0; r < layer.out; ++r) {
    const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in);
    double acc = layer.b[static_cast<std::size_t>(r)];
    for (int c = 0; c < layer.in; ++c) acc += wrow[c] * in[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
}

double activate(Activation act, double z) {
  return act == Activation::tanh_fn ? std::tanh(z) : std::max(0.0, z);
}

double activate_grad(Activation act, double z, double a) {
  return act == Activation::tanh_fn ? 1.0 - a * a : (z > 0.0 ? 1.0 : 0.0);
}

// log-softmax via logsumexp; fills probs and log_probs
void softmax_log(std::span<const double> logits, std::vector<double>& probs,
                 std::vector<double>& log_probs) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_sum = std::log(sum);
  probs.resize(logits.size());
  log_probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    log_probs[i] = logits[i] - m - log_sum;
    probs[i] = std::exp(log_probs[i]);
  }
  // exact renormalization so downstream sum invariants hold to 1e-9
  double p_sum = 0.0;
  for (double p : probs) p_sum += p;
  for (double& p : probs) p /= p_sum;
}

bool in_top_k(std::span<const double> probs, int target, int k) {
  // rank under (descending probability, ascending index)
  int rank = 0;
  const double pt = probs[static_cast<std::size_t>(target)];
  for (int j = 0; j < static_cast<int>(probs.size()); ++j) {
    if (probs[static_cast<std::size_t>(j)] > pt || (probs[static_cast<std::size_t>(j)] == pt && j < target)) {
      ++rank;
    }
  }
  return rank < k;
}

struct ForwardCache {
  std::vector<std::vector<double>> pre;    // trunk pre-activations
  std::vector<std::vector<double>> act;    // trunk activations
  std::vector<std::vector<double>> probs;  // per head
  std::vector<std::vector<double>> log_probs;
};

}  // namespace

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z = p;
  for (auto& layer : z.trunk) {
    std::fill(layer.w.begin(), layer.w.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  for (auto& layer : z.heads) {
    std::fill(layer.w.begin(), layer.w.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  return z;
}

BinaryPrediction ModelOutput::to_binary() const {
  const auto& p = head_probs.front();
  return BinaryPrediction{p[static_cast<std::size_t>(kBinaryAnimal)],
                          p[static_cast<std::size_t>(kBinaryEmpty)]};
}

MultiTaskPrediction ModelOutput::to_multitask() const {
  MultiTaskPrediction p;
  p.species_probs = head_probs[0];
  p.count_probs = head_probs[1];
  for (std::size_t h = 2; h < head_probs.size(); ++h) p.attribute_probs.push_back(head_probs[h][1]);
  return p;
}

namespace {

LayerParams init_layer(int in, int out, Rng& rng) {
  LayerParams layer;
  layer.in = in;
  layer.out = out;
  layer.w.resize(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
  layer.b.assign(static_cast<std::size_t>(out), 0.0);
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& x : layer.w) x = rng.uniform(-a, a);
  return layer;
}

}  // namespace

Network::Network(HeadLayout layout, int input_dim, std::vector<int> hidden, Activation activation,
                 std::uint64_t init_seed)
    : layout_(layout), input_dim_(input_dim), hidden_(std::move(hidden)), activation_(activation) {
  layout_.validate();
  if (input_dim_ < 1) throw ConfigError("network: input dimension must be >= 1");
  if (hidden_.empty()) throw ConfigError("network: at least one hidden layer required");
  Rng rng(init_seed);
  int prev = input_dim_;
  for (int h : hidden_) {
    if (h < 1) throw ConfigError("network: hidden layer sizes must be >= 1");
    params_.trunk.push_back(init_layer(prev, h, rng));
    prev = h;
  }
  for (const auto& head : layout_.heads()) {
    params_.heads.push_back(init_layer(prev, head.classes, rng));
  }
}

namespace {

ForwardCache run_forward(const ParamSet& params, Activation act, std::span<const double> x,
                         int input_dim) {
  if (static_cast<int>(x.size()) != input_dim) {
    throw DataError("forward: feature dimension mismatch (expected " + std::to_string(input_dim) +
                    ", got " + std::to_string(x.size()) + ")");
  }
  ForwardCache cache;
  std::vector<double> cur(x.begin(), x.end());
  for (const auto& layer : params.trunk) {
    std::vector<double> pre;
    linear_forward(layer, cur, pre);
    std::vector<double> a(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) a[i] = activate(act, pre[i]);
    cache.pre.push_back(std::move(pre));
    cache.act.push_back(a);
    cur = std::move(a);
  }
  for (const auto& head : params.heads) {
    std::vector<double> logits;
    linear_forward(head, cur, logits);
    for (double z : logits) {
      if (!std::isfinite(z)) throw NumericError("forward: non-finite activation in output layer");
    }
    std::vector<double> probs, log_probs;
    softmax_log(logits, probs, log_probs);
    cache.probs.push_back(std::move(probs));
    cache.log_probs.push_back(std::move(log_probs));
  }
  for (const auto& layer_act : cache.act) {
    for (double a : layer_act) {
      if (!std::isfinite(a)) throw NumericError("forward: non-finite activation in trunk");
    }
  }
  return cache;
}

}  // namespace

ModelOutput Network::forward(std::span<const double> features) const {
  ForwardCache cache = run_forward(params_, activation_, features, input_dim_);
  return ModelOutput{std::move(cache.probs)};
}

double Network::example_loss(std::span<const double> features, const Target& target,
                             const HeadWeights& weights) const {
  ForwardCache cache = run_forward(params_, activation_, features, input_dim_);
  double loss = 0.0;
  for (std::size_t h = 0; h < cache.log_probs.size(); ++h) {
    const int t = head_target(layout_, target, h);
    loss += head_weight(weights, h, t) * -cache.log_probs[h][static_cast<std::size_t>(t)];
  }
  return loss;
}

double Network::batch_loss(const TrainingSet& data, std::span<const std::size_t> batch,
                           const HeadWeights& weights) const {
  if (batch.empty()) throw DataError("batch_loss: empty batch");
  double total = 0.0;
  for (std::size_t idx : batch) {
    total += example_loss(data.features[idx], data.targets[idx], weights);
  }
  return total / static_cast<double>(batch.size());
}

Network::BackwardResult Network::backward(const TrainingSet& data,
                                          std::span<const std::size_t> batch,
                                          const HeadWeights& weights,
                                          std::optional<double> clamp) const {
  if (batch.empty()) throw DataError("backward: empty batch");
  BackwardResult result;
  result.grads = zeros_like(params_);
  result.eval.reserve(batch.size());

  const std::size_t n_trunk = params_.trunk.size();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (std::size_t idx : batch) {
    const auto& x = data.features[idx];
    const Target& target = data.targets[idx];
    ForwardCache cache = run_forward(params_, activation_, x, input_dim_);

    const auto& trunk_out = cache.act.back();
    std::vector<double> back(trunk_out.size(), 0.0);

    for (std::size_t h = 0; h < params_.heads.size(); ++h) {
      const int t = head_target(layout_, target, h);
      const double w = head_weight(weights, h, t);
      result.mean_loss += w * -cache.log_probs[h][static_cast<std::size_t>(t)] * inv_n;

      const auto& probs = cache.probs[h];
      auto& grad = result.grads.heads[h];
      const auto& head = params_.heads[h];
      for (int r = 0; r < head.out; ++r) {
        const double delta =
            w * (probs[static_cast<std::size_t>(r)] - (r == t ? 1.0 : 0.0)) * inv_n;
        grad.b[static_cast<std::size_t>(r)] += delta;
        double* grow = grad.w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(head.in);
        const double* wrow =
            head.w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(head.in);
        for (int c = 0; c < head.in; ++c) {
          grow[c] += delta * trunk_out[static_cast<std::size_t>(c)];
          back[static_cast<std::size_t>(c)] += wrow[c] * delta;
        }
      }
    }

    for (std::size_t l = n_trunk; l-- > 0;) {
      const auto& layer = params_.trunk[l];
      auto& grad = result.grads.trunk[l];
      const auto& pre = cache.pre[l];
      const auto& act_out = cache.act[l];
      std::span<const double> layer_in =
          l == 0 ? std::span<const double>(x) : std::span<const double>(cache.act[l - 1]);

      std::vector<double> next_back(static_cast<std::size_t>(layer.in), 0.0);
      for (int r = 0; r < layer.out; ++r) {
        const double dz = back[static_cast<std::size_t>(r)] *
                          activate_grad(activation_, pre[static_cast<std::size_t>(r)],
                                        act_out[static_cast<std::size_t>(r)]);
        grad.b[static_cast<std::size_t>(r)] += dz;
        double* grow = grad.w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in);
        const double* wrow =
            layer.w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in);
        for (int c = 0; c < layer.in; ++c) {
          grow[c] += dz * layer_in[static_cast<std::size_t>(c)];
          next_back[static_cast<std::size_t>(c)] += wrow[c] * dz;
        }
      }
      back = std::move(next_back);
    }

    const int primary_t = head_target(layout_, target, 0);
    ExampleEval eval;
    eval.example = idx;
    eval.top1_correct = argmax(cache.probs[0]) == primary_t;
    eval.top5_correct = in_top_k(cache.probs[0], primary_t, 5);
    result.eval.push_back(eval);
  }

  auto check_finite = [](const LayerParams& g, const std::string& where) {
    for (double v : g.w) {
      if (!std::isfinite(v)) throw NumericError("backward: non-finite gradient in " + where);
    }
    for (double v : g.b) {
      if (!std::isfinite(v)) throw NumericError("backward: non-finite gradient in " + where);
    }
  };
  for (std::size_t l = 0; l < result.grads.trunk.size(); ++l) {
    check_finite(result.grads.trunk[l], "trunk layer " + std::to_string(l));
  }
  for (std::size_t h = 0; h < result.grads.heads.size(); ++h) {
    check_finite(result.grads.heads[h], "head layer " + std::to_string(h));
  }

  if (clamp) {
    const double bound = *clamp;
    for (auto& head : result.grads.heads) {
      for (auto& v : head.w) v = std::clamp(v, -bound, bound);
      for (auto& v : head.b) v = std::clamp(v, -bound, bound);
    }
  }
  return result;
}

void Network::apply_sgd_update(const ParamSet& grads, ParamSet& momentum_buffers,
                               double learning_rate, double weight_decay, double momentum) {
  auto update_layer = [&](LayerParams& p, LayerParams& v, const LayerParams& g) {
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      v.w[i] = momentum * v.w[i] - learning_rate * (g.w[i] + weight_decay * p.w[i]);
      p.w[i] += v.w[i];
    }
    for (std::size_t i = 0; i < p.b.size(); ++i) {
      // weight decay applies to weights only
      v.b[i] = momentum * v.b[i] - learning_rate * g.b[i];
      p.b[i] += v.b[i];
    }
  };
  for (std::size_t l = 0; l < params_.trunk.size(); ++l) {
    update_layer(params_.trunk[l], momentum_buffers.trunk[l], grads.trunk[l]);
  }
  for (std::size_t h = 0; h < params_.heads.size(); ++h) {
    update_layer(params_.heads[h], momentum_buffers.heads[h], grads.heads[h]);
  }
}

HeadWeights no_head_weights(const HeadLayout& layout) {
  return HeadWeights(layout.heads().size());
}

HeadWeights make_head_weights(const HeadLayout& layout, const TrainingSet& train,
                              bool weight_all_heads) {
  HeadWeights weights = no_head_weights(layout);

  const std::size_t primary = n_class_keys(layout);
  std::vector<std::size_t> counts(primary, 0);
  for (std::size_t key : class_keys(train, layout)) ++counts[key];
  weights[0] = class_weights(counts).weights;

  if (weight_all_heads && layout.mode == HeadMode::multitask) {
    std::vector<std::size_t> bin_counts(static_cast<std::size_t>(layout.n_count_bins), 0);
    std::vector<std::array<std::size_t, 2>> attr_counts(
        static_cast<std::size_t>(layout.n_attributes), {0, 0});
    for (const auto& t : train.targets) {
      if (t.count_bin < 0 || !t.has_attributes) {
        throw DataError("make_head_weights: example lacks count/attribute labels");
      }
      ++bin_counts[static_cast<std::size_t>(t.count_bin)];
      for (int a = 0; a < layout.n_attributes; ++a) {
        ++attr_counts[static_cast<std::size_t>(a)][t.attributes[static_cast<std::size_t>(a)] ? 1 : 0];
      }
    }
    weights[1] = class_weights(bin_counts).weights;
    for (int a = 0; a < layout.n_attributes; ++a) {
      const auto& c = attr_counts[static_cast<std::size_t>(a)];
      weights[2 + static_cast<std::size_t>(a)] =
          class_weights(std::array<std::size_t, 2>{c[0], c[1]}).weights;
    }
  }
  return weights;
}

ModelState init_state(const HeadLayout& layout, int input_dim, const TrainConfig& cfg) {
  cfg.validate();
  ModelState state;
  state.net = Network(layout, input_dim, cfg.hidden, cfg.activation, cfg.seed);
  state.momentum = zeros_like(state.net.params());
  return state;
}

double evaluate_accuracy(const Network& net, const TrainingSet& data) {
  if (data.size() == 0) throw DataError("evaluate_accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ModelOutput out = net.forward(data.features[i]);
    const int t = head_target(net.layout(), data.targets[i], 0);
    if (argmax(out.primary()) == t) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ModelState fit(ModelState state, const TrainingSet& train, const TrainingSet& test,
               const TrainConfig& cfg, BatchSource& sampler, const HeadWeights& weights) {
  cfg.validate();
  if (train.size() == 0) throw DataError("fit: empty training set");
  if (test.size() == 0) throw DataError("fit: empty test set");

  const int epoch_size =
      cfg.epoch_size > 0
          ? cfg.epoch_size
          : static_cast<int>((train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                             static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const ScheduleRow& row = cfg.row_for_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    for (int step = 0; step < epoch_size; ++step) {
      auto batches = sampler.next_step();
      bool base = true;
      for (auto& batch : batches) {
        if (batch.empty()) continue;
        Network::BackwardResult res;
        try {
          res = state.net.backward(train, batch, weights, cfg.grad_clamp);
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(res.mean_loss)) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(step) + ": non-finite loss");
        }
        state.net.apply_sgd_update(res.grads, state.momentum, row.learning_rate, row.weight_decay,
                                   cfg.momentum);
        loss_sum += res.mean_loss;
        ++loss_count;
        if (base) {
          sampler.observe(res.eval);
          base = false;
        }
      }
    }

    const double acc = evaluate_accuracy(state.net, test);
    state.log.push_back(EpochLog{epoch, row.learning_rate, row.weight_decay,
                                 loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                                 acc});
    state.epoch = epoch;
    if (acc > state.best_accuracy) {
      state.best = state.net;
      state.best_accuracy = acc;
      state.best_epoch = epoch;
    }
  }
  return state;
}

std::vector<ModelOutput> predict_batch(const Network& net, const TrainingSet& data) {
  return predict_batch(net, data.features);
}

std::vector<ModelOutput> predict_batch(const Network& net,
                                       const std::vector<std::vector<double>>& features) {
  std::vector<ModelOutput> out;
  out.reserve(features.size());
  for (const auto& x : features) out.push_back(net.forward(x));
  return out;
}

// ---- checkpoint serialization ----

namespace {

const char* mode_name(HeadMode m) {
  switch (m) {
    case HeadMode::binary: return "binary";
    case HeadMode::multitask: return "multitask";
    case HeadMode::one_stage: return "one_stage";
  }
  throw ConfigError("unknown head mode");
}

HeadMode mode_from_name(const std::string& s) {
  if (s == "binary") return HeadMode::binary;
  if (s == "multitask") return HeadMode::multitask;
  if (s == "one_stage") return HeadMode::one_stage;
  throw DataError("checkpoint: unknown head mode '" + s + "'");
}

const char* activation_name(Activation a) {
  return a == Activation::tanh_fn ? "tanh" : "relu";
}

Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::tanh_fn;
  if (s == "relu") return Activation::relu;
  throw DataError("checkpoint: unknown activation '" + s + "'");
}

const char* imbalance_name(ImbalanceMethod m) {
  switch (m) {
    case ImbalanceMethod::none: return "none";
    case ImbalanceMethod::weighted_loss: return "weighted_loss";
    case ImbalanceMethod::oversample: return "oversample";
    case ImbalanceMethod::emphasis: return "emphasis";
  }
  throw ConfigError("unknown imbalance method");
}

ImbalanceMethod imbalance_from_name(const std::string& s) {
  if (s == "none") return ImbalanceMethod::none;
  if (s == "weighted_loss") return ImbalanceMethod::weighted_loss;
  if (s == "oversample") return ImbalanceMethod::oversample;
  if (s == "emphasis") return ImbalanceMethod::emphasis;
  throw DataError("checkpoint: unknown imbalance method '" + s + "'");
}

json layer_to_json(const LayerParams& p) {
  return json{{"in", p.in}, {"out", p.out}, {"w", p.w}, {"b", p.b}};
}

LayerParams layer_from_json(const json& j) {
  LayerParams p;
  p.in = j.at("in").get<int>();
  p.out = j.at("out").get<int>();
  p.w = j.at("w").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  if (p.w.size() != static_cast<std::size_t>(p.in) * static_cast<std::size_t>(p.out) ||
      p.b.size() != static_cast<std::size_t>(p.out)) {
    throw DataError("checkpoint: layer shape mismatch");
  }
  return p;
}

json config_to_json(const TrainConfig& cfg) {
  json rows = json::array();
  for (const auto& r : cfg.schedule) {
    rows.push_back({{"first", r.first_epoch},
                    {"last", r.last_epoch},
                    {"lr", r.learning_rate},
                    {"wd", r.weight_decay}});
  }
  json j{{"batch_size", cfg.batch_size},
         {"momentum", cfg.momentum},
         {"epochs", cfg.epochs},
         {"epoch_size", cfg.epoch_size},
         {"schedule", rows},
         {"seed", cfg.seed},
         {"hidden", cfg.hidden},
         {"activation", activation_name(cfg.activation)},
         {"imbalance", imbalance_name(cfg.imbalance)},
         {"weight_all_heads", cfg.weight_all_heads},
         {"emphasis_p_top1", cfg.emphasis_p_top1},
         {"emphasis_p_top5", cfg.emphasis_p_top5}};
  if (cfg.grad_clamp) {
    j["grad_clamp"] = *cfg.grad_clamp;
  } else {
    j["grad_clamp"] = nullptr;
  }
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.momentum = j.at("momentum").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.epoch_size = j.at("epoch_size").get<int>();
  cfg.schedule.clear();
  for (const auto& r : j.at("schedule")) {
    cfg.schedule.push_back(ScheduleRow{r.at("first").get<int>(), r.at("last").get<int>(),
                                       r.at("lr").get<double>(), r.at("wd").get<double>()});
  }
  if (!j.at("grad_clamp").is_null()) cfg.grad_clamp = j.at("grad_clamp").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.activation = activation_from_name(j.at("activation").get<std::string>());
  cfg.imbalance = imbalance_from_name(j.at("imbalance").get<std::string>());
  cfg.weight_all_heads = j.at("weight_all_heads").get<bool>();
  cfg.emphasis_p_top1 = j.at("emphasis_p_top1").get<double>();
  cfg.emphasis_p_top5 = j.at("emphasis_p_top5").get<double>();
  return cfg;
}

}  // namespace

Network Checkpoint::to_network() const {
  Network net(layout, input_dim, hidden, activation, 0);
  net.params() = params;
  return net;
}

Checkpoint Checkpoint::from_state(const ModelState& state, const TrainConfig& cfg,
                                  std::optional<ChannelStats> stats) {
  const Network& net = state.best_or_final();
  Checkpoint ckpt;
  ckpt.layout = net.layout();
  ckpt.input_dim = net.input_dim();
  ckpt.hidden = net.hidden();
  ckpt.activation = net.activation();
  ckpt.params = net.params();
  ckpt.best_accuracy = state.best_accuracy;
  ckpt.best_epoch = state.best_epoch;
  ckpt.seed = cfg.seed;
  ckpt.config = cfg;
  ckpt.feature_stats = std::move(stats);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j;
  j["format"] = "ctpipe.checkpoint";
  j["format_version"] = 1;
  j["tool_version"] = kVersion;
  j["layout"] = {{"mode", mode_name(ckpt.layout.mode)},
                 {"n_species", ckpt.layout.n_species},
                 {"n_count_bins", ckpt.layout.n_count_bins},
                 {"n_attributes", ckpt.layout.n_attributes}};
  j["input_dim"] = ckpt.input_dim;
  j["hidden"] = ckpt.hidden;
  j["activation"] = activation_name(ckpt.activation);
  json trunk = json::array();
  for (const auto& l : ckpt.params.trunk) trunk.push_back(layer_to_json(l));
  json heads = json::array();
  for (const auto& l : ckpt.params.heads) heads.push_back(layer_to_json(l));
  j["params"] = {{"trunk", trunk}, {"heads", heads}};
  j["best_accuracy"] = ckpt.best_accuracy;
  j["best_epoch"] = ckpt.best_epoch;
  j["seed"] = ckpt.seed;
  j["config"] = config_to_json(ckpt.config);
  if (ckpt.feature_stats) {
    j["feature_stats"] = {{"mean", ckpt.feature_stats->mean},
                          {"stddev", ckpt.feature_stats->stddev},
                          {"clamped_channels", ckpt.feature_stats->clamped_channels}};
  } else {
    j["feature_stats"] = nullptr;
  }

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "ctpipe.checkpoint") {
    throw DataError("checkpoint '" + path.string() + "' has an unknown format");
  }
  try {
    Checkpoint ckpt;
    const json& layout = j.at("layout");
    ckpt.layout.mode = mode_from_name(layout.at("mode").get<std::string>());
    ckpt.layout.n_species = layout.at("n_species").get<int>();
    ckpt.layout.n_count_bins = layout.at("n_count_bins").get<int>();
    ckpt.layout.n_attributes = layout.at("n_attributes").get<int>();
    ckpt.input_dim = j.at("input_dim").get<int>();
    ckpt.hidden = j.at("hidden").get<std::vector<int>>();
    ckpt.activation = activation_from_name(j.at("activation").get<std::string>());
    for (const auto& l : j.at("params").at("trunk")) ckpt.params.trunk.push_back(layer_from_json(l));
    for (const auto& l : j.at("params").at("heads")) ckpt.params.heads.push_back(layer_from_json(l));
    ckpt.best_accuracy = j.at("best_accuracy").get<double>();
    ckpt.best_epoch = j.at("best_epoch").get<int>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.config = config_from_json(j.at("config"));
    if (!j.at("feature_stats").is_null()) {
      ChannelStats stats;
      stats.mean = j.at("feature_stats").at("mean").get<std::vector<double>>();
      stats.stddev = j.at("feature_stats").at("stddev").get<std::vector<double>>();
      stats.clamped_channels = j.at("feature_stats").at("clamped_channels").get<std::vector<int>>();
      ckpt.feature_stats = std::move(stats);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' is malformed: " + e.what());
  }
}

}  // namespace ctpipe
