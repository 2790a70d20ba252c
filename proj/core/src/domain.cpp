#include "ctpipe/domain.hpp"

#include <cmath>
#include <unordered_set>

namespace ctpipe {

Taxonomy::Taxonomy(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw DataError("taxonomy: empty species name");
    if (!seen.insert(n).second) throw DataError("taxonomy: duplicate species name '" + n + "'");
  }
}

const std::string& Taxonomy::name(int id) const {
  if (id < 0 || id >= size()) throw DataError("taxonomy: species id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> Taxonomy::id(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

std::string_view CountBin::label() const {
  static constexpr std::array<std::string_view, kBins> kLabels = {
      "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11-50", "51+"};
  return kLabels[static_cast<std::size_t>(index)];
}

CountBin count_to_bin(int n) {
  if (n <= 0) throw DataError("count_to_bin: count must be >= 1, got " + std::to_string(n));
  if (n <= 10) return CountBin{n - 1};
  if (n <= 50) return CountBin{10};
  return CountBin{11};
}

int bin_representative(CountBin bin) {
  if (bin.index < 0 || bin.index >= CountBin::kBins) {
    throw DataError("bin_representative: bin index out of range");
  }
  if (bin.index <= 9) return bin.index + 1;
  return bin.index == 10 ? 11 : 51;
}

bool AttributeSet::flag(int i) const {
  switch (i) {
    case 0: return standing;
    case 1: return resting;
    case 2: return moving;
    case 3: return eating;
    case 4: return interacting;
    case 5: return young_present;
    default: throw DataError("attribute index out of range");
  }
}

void AttributeSet::set_flag(int i, bool value) {
  switch (i) {
    case 0: standing = value; return;
    case 1: resting = value; return;
    case 2: moving = value; return;
    case 3: eating = value; return;
    case 4: interacting = value; return;
    case 5: young_present = value; return;
    default: throw DataError("attribute index out of range");
  }
}

std::array<bool, AttributeSet::kAttributes> AttributeSet::flags() const {
  return {standing, resting, moving, eating, interacting, young_present};
}

LabelSet LabelSet::animal(int species_id, CountBin bin, std::optional<AttributeSet> attrs) {
  LabelSet l;
  l.empty = false;
  l.species = species_id;
  l.count = bin;
  l.attributes = attrs;
  return l;
}

bool LabelSet::valid() const {
  if (empty) return !species && !count && !attributes;
  return species.has_value() && count.has_value();
}

namespace {

bool finite_all(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool in_unit_range(std::span<const double> v) {
  for (double x : v) {
    if (x < 0.0 || x > 1.0) return false;
  }
  return true;
}

bool sums_to_one(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return std::fabs(s - 1.0) <= kProbSumTolerance;
}

}  // namespace

ValidationReport validate_prediction(const MultiTaskPrediction& p) {
  ValidationReport r;
  if (p.species_probs.empty()) r.violations.push_back("species head empty");
  if (p.count_probs.empty()) r.violations.push_back("count head empty");
  if (!finite_all(p.species_probs) || !finite_all(p.count_probs) || !finite_all(p.attribute_probs)) {
    r.violations.push_back("non-finite probability");
    return r;
  }
  if (!in_unit_range(p.species_probs)) r.violations.push_back("species range");
  if (!p.species_probs.empty() && !sums_to_one(p.species_probs)) r.violations.push_back("species normalization");
  if (!in_unit_range(p.count_probs)) r.violations.push_back("count range");
  if (!p.count_probs.empty() && !sums_to_one(p.count_probs)) r.violations.push_back("count normalization");
  if (!in_unit_range(p.attribute_probs)) r.violations.push_back("attribute range");
  return r;
}

ValidationReport validate_prediction(const BinaryPrediction& p) {
  ValidationReport r;
  if (!std::isfinite(p.p_animal) || !std::isfinite(p.p_empty)) {
    r.violations.push_back("non-finite probability");
    return r;
  }
  if (p.p_animal < 0.0 || p.p_animal > 1.0 || p.p_empty < 0.0 || p.p_empty > 1.0) {
    r.violations.push_back("binary range");
  }
  if (std::fabs(p.p_animal + p.p_empty - 1.0) > kProbSumTolerance) {
    r.violations.push_back("binary normalization");
  }
  return r;
}

CaptureEvent propagate_event_labels(CaptureEvent event) {
  for (auto& image : event.images) {
    image.label = event.label;
    image.event_id = event.event_id;
  }
  return event;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw DataError("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace ctpipe
