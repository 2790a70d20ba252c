#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctpipe/domain.hpp"

namespace ctpipe {

struct DatasetStats {
  std::size_t n_events = 0;
  std::size_t n_images = 0;
  std::size_t n_empty_events = 0;
  std::size_t n_empty_images = 0;
  std::size_t n_multi_species_events = 0;
  std::vector<std::size_t> events_per_class;  // indexed by species id
  std::vector<std::size_t> images_per_class;

  double empty_event_fraction() const {
    return n_events == 0 ? 0.0 : static_cast<double>(n_empty_events) / static_cast<double>(n_events);
  }
  double empty_image_fraction() const {
    return n_images == 0 ? 0.0 : static_cast<double>(n_empty_images) / static_cast<double>(n_images);
  }
};

// Event-grouped dataset. Immutable after construction; every transformation
// returns a new Dataset. Stats are computed at construction so concurrent
// readers never race.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Taxonomy taxonomy, std::vector<CaptureEvent> events);

  const Taxonomy& taxonomy() const { return taxonomy_; }
  const std::vector<CaptureEvent>& events() const { return events_; }
  const DatasetStats& stats() const { return stats_; }
  std::size_t n_images() const { return stats_.n_images; }

  bool operator==(const Dataset& other) const {
    return taxonomy_ == other.taxonomy_ && events_ == other.events_;
  }

 private:
  Taxonomy taxonomy_;
  std::vector<CaptureEvent> events_;
  DatasetStats stats_;
};

struct SplitSpec {
  double train_fraction = 0.8;  // in (0, 1)
  std::uint64_t seed = 0;
};

// JSONL manifest: line 1 is {"taxonomy": [...]}, every further line one
// image record. An event's lines must be contiguous and agree on all label
// fields. Unknown top-level fields are ignored.
Dataset load_manifest(const std::filesystem::path& path);

// Inverse of load_manifest; load(save(d)) == d.
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

struct FilterResult {
  Dataset dataset;
  std::size_t removed_events = 0;
  double removed_fraction = 0.0;
};

// Drops events that list more than one species.
FilterResult filter_single_species(const Dataset& d);

// Group-aware split: whole events go to one side or the other, uniformly at
// random under the seed. Event order within each side is preserved.
std::pair<Dataset, Dataset> split_by_event(const Dataset& d, const SplitSpec& spec);

// Split following per-event hints from the manifest. Returns nullopt unless
// every event carries a hint.
std::optional<std::pair<Dataset, Dataset>> split_by_hint(const Dataset& d);

struct BalanceResult {
  Dataset dataset;
  bool shortfall = false;   // fewer empty images than requested
  std::string warning;      // set when shortfall
};

// Task-I class balance: keeps every non-empty image and uniformly samples an
// equal number of empty images (events shrink; emptied events drop out).
BalanceResult balance_empty(const Dataset& d, std::uint64_t seed);

// One-stage prep: like balance_empty but the empty pool is capped at
// target_empty_images (SI-style cap at the largest species class size).
BalanceResult subsample_empty(const Dataset& d, std::size_t target_empty_images, std::uint64_t seed);

}  // namespace ctpipe
