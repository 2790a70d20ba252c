#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "ctpipe/errors.hpp"
#include "ctpipe/rng.hpp"

namespace ctpipe {

enum class ImbalanceMethod { none, weighted_loss, oversample, emphasis };

// Normalized per-class loss weights: f_i = N / n_i, w_i = f_i / sum(f).
struct ClassWeights {
  std::vector<double> weights;  // sums to 1
};

ClassWeights class_weights(std::span<const std::size_t> counts);

// Per-example training feedback from the most recent base batch.
struct ExampleEval {
  std::size_t example = 0;
  bool top1_correct = true;
  bool top5_correct = true;
};

// Yields the sub-batches (index lists) to train on at each step. The trainer
// feeds back base-batch correctness through observe(); only the emphasis
// sampler uses it.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::vector<std::vector<std::size_t>> next_step() = 0;
  virtual void observe(std::span<const ExampleEval> /*base_batch_eval*/) {}
};

// Plain SGD batches: uniform with replacement.
class UniformSampler final : public BatchSource {
 public:
  UniformSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> next_step() override;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
};

// Class-uniform sampling: pick a class uniformly, then an example uniformly
// within it, so every class has equal expected frequency.
class OversampleSampler final : public BatchSource {
 public:
  OversampleSampler(std::span<const std::size_t> class_of_example, std::size_t n_classes,
                    std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> next_step() override;

 private:
  std::vector<std::vector<std::size_t>> by_class_;
  std::size_t batch_size_;
  Rng rng_;
};

// Two FIFO retry queues: one for top-1 misses, one for full top-5 misses.
// Bounded; overflow drops the oldest entry. Duplicates allowed.
class EmphasisQueues {
 public:
  explicit EmphasisQueues(std::size_t capacity, double p_top1 = 0.20, double p_top5 = 0.35);

  double p_top1() const { return p_top1_; }
  double p_top5() const { return p_top5_; }
  std::size_t capacity() const { return capacity_; }

  // Routing: a full top-5 miss goes to the top-5 queue only (the stronger
  // failure); a plain top-1 miss goes to the top-1 queue.
  void enqueue(const ExampleEval& eval);

  std::vector<std::size_t> dequeue_top1(std::size_t max_n);
  std::vector<std::size_t> dequeue_top5(std::size_t max_n);

  const std::deque<std::size_t>& top1_queue() const { return top1_; }
  const std::deque<std::size_t>& top5_queue() const { return top5_; }

 private:
  std::deque<std::size_t> top1_;
  std::deque<std::size_t> top5_;
  double p_top1_;
  double p_top5_;
  std::size_t capacity_;
};

// One emphasis step: enqueue last step's misses, then return the base batch
// plus (with probability p_top1 / p_top5) one FIFO batch from each queue.
// An empty queue contributes no extra batch.
std::vector<std::vector<std::size_t>> emphasis_step(EmphasisQueues& queues, Rng& rng,
                                                    std::vector<std::size_t> base_batch,
                                                    std::span<const ExampleEval> last_eval,
                                                    std::size_t batch_size);

class EmphasisSampler final : public BatchSource {
 public:
  EmphasisSampler(std::size_t n_examples, std::size_t batch_size, std::uint64_t seed,
                  std::size_t queue_capacity, double p_top1 = 0.20, double p_top5 = 0.35);

  std::vector<std::vector<std::size_t>> next_step() override;
  void observe(std::span<const ExampleEval> base_batch_eval) override;

  const EmphasisQueues& queues() const { return queues_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  EmphasisQueues queues_;
  std::vector<ExampleEval> pending_eval_;
};

}  // namespace ctpipe
