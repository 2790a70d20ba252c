#include "ctpipe/imbalance.hpp"

#include <string>

namespace ctpipe {

ClassWeights class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw DataError("class_weights: no classes");
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw DataError("class_weights: class " + std::to_string(i) + " has no examples");
    }
    total += counts[i];
  }
  std::vector<double> f(counts.size());
  double f_sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    f[i] = static_cast<double>(total) / static_cast<double>(counts[i]);
    f_sum += f[i];
  }
  ClassWeights w;
  w.weights.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) w.weights[i] = f[i] / f_sum;
  return w;
}

UniformSampler::UniformSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed)
    : n_(n_examples), batch_size_(batch_size), rng_(seed) {
  if (n_ == 0) throw DataError("uniform sampler: empty training set");
  if (batch_size_ == 0) throw ConfigError("uniform sampler: batch size must be positive");
}

std::vector<std::vector<std::size_t>> UniformSampler::next_step() {
  std::vector<std::size_t> batch(batch_size_);
  for (auto& idx : batch) idx = rng_.below(n_);
  return {std::move(batch)};
}

OversampleSampler::OversampleSampler(std::span<const std::size_t> class_of_example,
                                     std::size_t n_classes, std::size_t batch_size,
                                     std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (n_classes == 0) throw DataError("oversample: no classes");
  if (batch_size_ == 0) throw ConfigError("oversample: batch size must be positive");
  by_class_.resize(n_classes);
  for (std::size_t i = 0; i < class_of_example.size(); ++i) {
    const std::size_t c = class_of_example[i];
    if (c >= n_classes) throw DataError("oversample: class key out of range");
    by_class_[c].push_back(i);
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (by_class_[c].empty()) {
      throw DataError("oversample: class " + std::to_string(c) + " has no examples");
    }
  }
}

std::vector<std::vector<std::size_t>> OversampleSampler::next_step() {
  std::vector<std::size_t> batch(batch_size_);
  for (auto& idx : batch) {
    const auto& members = by_class_[rng_.below(by_class_.size())];
    idx = members[rng_.below(members.size())];
  }
  return {std::move(batch)};
}

EmphasisQueues::EmphasisQueues(std::size_t capacity, double p_top1, double p_top5)
    : p_top1_(p_top1), p_top5_(p_top5), capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("emphasis queues: capacity must be positive");
  if (p_top1_ < 0.0 || p_top1_ > 1.0 || p_top5_ < 0.0 || p_top5_ > 1.0) {
    throw ConfigError("emphasis queues: feed probabilities must be in [0, 1]");
  }
}

namespace {

void bounded_push(std::deque<std::size_t>& q, std::size_t value, std::size_t capacity) {
  if (q.size() == capacity) q.pop_front();  // drop oldest
  q.push_back(value);
}

std::vector<std::size_t> drain_front(std::deque<std::size_t>& q, std::size_t max_n) {
  std::vector<std::size_t> out;
  while (!q.empty() && out.size() < max_n) {
    out.push_back(q.front());
    q.pop_front();
  }
  return out;
}

}  // namespace

void EmphasisQueues::enqueue(const ExampleEval& eval) {
  if (!eval.top5_correct) {
    bounded_push(top5_, eval.example, capacity_);
  } else if (!eval.top1_correct) {
    bounded_push(top1_, eval.example, capacity_);
  }
}

std::vector<std::size_t> EmphasisQueues::dequeue_top1(std::size_t max_n) {
  return drain_front(top1_, max_n);
}

std::vector<std::size_t> EmphasisQueues::dequeue_top5(std::size_t max_n) {
  return drain_front(top5_, max_n);
}

std::vector<std::vector<std::size_t>> emphasis_step(EmphasisQueues& queues, Rng& rng,
                                                    std::vector<std::size_t> base_batch,
                                                    std::span<const ExampleEval> last_eval,
                                                    std::size_t batch_size) {
  for (const auto& eval : last_eval) queues.enqueue(eval);

  std::vector<std::vector<std::size_t>> batches;
  batches.push_back(std::move(base_batch));

  // Bernoulli draws happen unconditionally so the stream does not depend on
  // queue occupancy.
  const bool feed_top1 = rng.bernoulli(queues.p_top1());
  const bool feed_top5 = rng.bernoulli(queues.p_top5());
  if (feed_top1) {
    auto extra = queues.dequeue_top1(batch_size);
    if (!extra.empty()) batches.push_back(std::move(extra));
  }
  if (feed_top5) {
    auto extra = queues.dequeue_top5(batch_size);
    if (!extra.empty()) batches.push_back(std::move(extra));
  }
  return batches;
}

EmphasisSampler::EmphasisSampler(std::size_t n_examples, std::size_t batch_size,
                                 std::uint64_t seed, std::size_t queue_capacity, double p_top1,
                                 double p_top5)
    : n_(n_examples),
      batch_size_(batch_size),
      rng_(seed),
      queues_(queue_capacity, p_top1, p_top5) {
  if (n_ == 0) throw DataError("emphasis sampler: empty training set");
  if (batch_size_ == 0) throw ConfigError("emphasis sampler: batch size must be positive");
}

std::vector<std::vector<std::size_t>> EmphasisSampler::next_step() {
  std::vector<std::size_t> base(batch_size_);
  for (auto& idx : base) idx = rng_.below(n_);
  auto batches = emphasis_step(queues_, rng_, std::move(base), pending_eval_, batch_size_);
  pending_eval_.clear();
  return batches;
}

void EmphasisSampler::observe(std::span<const ExampleEval> base_batch_eval) {
  pending_eval_.assign(base_batch_eval.begin(), base_batch_eval.end());
}

}  // namespace ctpipe
