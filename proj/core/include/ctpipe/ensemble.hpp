#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctpipe/domain.hpp"

namespace ctpipe {

// Elementwise arithmetic mean of normalized distributions stays normalized.
std::vector<double> average_distributions(std::span<const std::vector<double>> members);

// Ensemble averaging: per-head elementwise mean over member predictions.
MultiTaskPrediction average_predictions(std::span<const MultiTaskPrediction> members);
BinaryPrediction average_binary(std::span<const BinaryPrediction> members);

// Top-n class ids by descending probability; ties break toward the lower id.
std::vector<int> top_n(std::span<const double> probs, int n);

// Event-level prediction: the same averaging applied across the images of
// one capture event.
MultiTaskPrediction aggregate_event(std::span<const MultiTaskPrediction> image_predictions);
BinaryPrediction aggregate_event_binary(std::span<const BinaryPrediction> image_predictions);

// JSONL prediction files: one object per (id, head) with a probability
// array. Consumed by the metrics and threshold stages.
struct PredictionRecord {
  std::string id;              // image_id or event_id
  bool is_event = false;
  std::string head;            // "species" | "count" | "attributes" | "binary" | "one_stage"
  std::vector<double> probs;

  bool operator==(const PredictionRecord&) const = default;
};

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace ctpipe
