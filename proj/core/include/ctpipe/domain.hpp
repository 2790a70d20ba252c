#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctpipe/errors.hpp"

namespace ctpipe {

// Probability vectors must sum to one within this tolerance.
inline constexpr double kProbSumTolerance = 1e-9;

// Species vocabulary for one dataset. The canonical corpus has 48 classes,
// but the size is whatever the manifest header declares.
class Taxonomy {
 public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  std::optional<int> id(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const Taxonomy&) const = default;

 private:
  std::vector<std::string> names_;
};

struct SpeciesLabel {
  int id = -1;
  std::string name;

  bool operator==(const SpeciesLabel&) const = default;
};

// Ordinal animal-count bucket: "1".."10", "11-50", "51+".
struct CountBin {
  static constexpr int kBins = 12;

  int index = 0;  // 0..11

  std::string_view label() const;
  bool operator==(const CountBin&) const = default;
  auto operator<=>(const CountBin&) const = default;
};

// n >= 1; 1..10 map to their own bin, 11..50 and >= 51 to the two tail bins.
CountBin count_to_bin(int n);

// Smallest integer count that falls in the bin. Used when a bin has to be
// written back out as a count field.
int bin_representative(CountBin bin);

// Six independent behavior/young flags. Any subset may be set.
struct AttributeSet {
  static constexpr int kAttributes = 6;
  static constexpr std::array<std::string_view, kAttributes> kNames = {
      "standing", "resting", "moving", "eating", "interacting", "young_present"};

  bool standing = false;
  bool resting = false;
  bool moving = false;
  bool eating = false;
  bool interacting = false;
  bool young_present = false;

  bool flag(int i) const;
  void set_flag(int i, bool value);
  std::array<bool, kAttributes> flags() const;

  bool operator==(const AttributeSet&) const = default;
};

// Ground truth for one image or capture event. Empty records carry nothing
// else; non-empty records always carry species and count, attributes when
// the source had them.
struct LabelSet {
  bool empty = true;
  std::optional<int> species;  // id into the dataset taxonomy
  std::optional<CountBin> count;
  std::optional<AttributeSet> attributes;

  static LabelSet empty_label() { return LabelSet{}; }
  static LabelSet animal(int species_id, CountBin bin,
                         std::optional<AttributeSet> attrs = std::nullopt);

  bool valid() const;

  bool operator==(const LabelSet&) const = default;
};

enum class SplitHint { none, train, test };

struct ImageRecord {
  std::string image_id;
  std::string event_id;
  std::vector<double> features;
  LabelSet label;

  bool operator==(const ImageRecord&) const = default;
};

// One camera trigger: a short burst of images sharing a single label set.
struct CaptureEvent {
  std::string event_id;
  std::vector<ImageRecord> images;
  LabelSet label;
  // Additional species ids beyond label.species when the source event listed
  // more than one. Non-empty marks the event for filter_single_species.
  std::vector<int> extra_species;
  SplitHint split_hint = SplitHint::none;

  bool multi_species() const { return !extra_species.empty(); }

  bool operator==(const CaptureEvent&) const = default;
};

struct BinaryPrediction {
  double p_animal = 0.0;
  double p_empty = 0.0;

  bool operator==(const BinaryPrediction&) const = default;
};

struct MultiTaskPrediction {
  std::vector<double> species_probs;
  std::vector<double> count_probs;
  std::vector<double> attribute_probs;  // positive-class probability per flag

  bool operator==(const MultiTaskPrediction&) const = default;
};

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

// Checks every MultiTaskPrediction invariant; collects violations instead of
// throwing.
ValidationReport validate_prediction(const MultiTaskPrediction& p);
ValidationReport validate_prediction(const BinaryPrediction& p);

// Copies the event label onto every member image. Idempotent.
CaptureEvent propagate_event_labels(CaptureEvent event);

// Highest-probability index; ties break toward the lowest index.
int argmax(std::span<const double> values);

}  // namespace ctpipe
