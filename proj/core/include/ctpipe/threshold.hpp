#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctpipe/domain.hpp"

namespace ctpipe {

// Confidence is the maximum class probability of the relevant head.
double confidence(std::span<const double> probs);
double species_confidence(const MultiTaskPrediction& p);
double count_confidence(const MultiTaskPrediction& p);
double binary_confidence(const BinaryPrediction& p);

enum class SweepMetric { top1, top5, within_one_bin, binary_accuracy };

// pre-extracted per-example sweep input
struct SweepExample {
  double confidence = 0.0;
  bool primary_correct = false;
  bool secondary_correct = false;  // top-5 or ±1-bin companion metric
};

struct CurvePoint {
  double threshold = 0.0;
  double retained_fraction = 0.0;
  std::optional<double> accuracy;   // absent when the retained set is empty
  std::optional<double> secondary;
};

struct ThresholdCurve {
  std::vector<CurvePoint> points;
};

// thresholds 0.00 .. 0.99, step 0.01
std::vector<double> default_threshold_grid();

// Per threshold t: keep examples with confidence >= t, report the retained
// fraction and the metric on the retained set. Thresholds must be strictly
// increasing.
ThresholdCurve sweep(std::span<const SweepExample> examples, std::span<const double> thresholds);

// Builds SweepExamples from multitask predictions. top1/top5 use the species
// head; within_one_bin pairs count-head top-1 with the ±1-bin companion.
std::vector<SweepExample> make_sweep_examples(const std::vector<MultiTaskPrediction>& preds,
                                              const std::vector<LabelSet>& labels,
                                              SweepMetric metric);
std::vector<SweepExample> make_sweep_examples_binary(const std::vector<BinaryPrediction>& preds,
                                                     const std::vector<LabelSet>& labels);

ThresholdCurve sweep(const std::vector<MultiTaskPrediction>& preds,
                     const std::vector<LabelSet>& labels, std::span<const double> thresholds,
                     SweepMetric metric);

enum class AutomationTask { stage1_binary, species, count };

struct AutomationSummary {
  AutomationTask task = AutomationTask::species;
  double matched_threshold = 0.0;
  double automated_fraction_of_stage = 0.0;
  double total_automated_fraction = 0.0;  // after two-stage composition
  double target_accuracy = 0.0;
};

// Smallest grid threshold whose retained-set accuracy reaches the target.
// Throws UnattainableError (carrying the best achievable accuracy) when no
// threshold qualifies.
AutomationSummary match_human(std::span<const SweepExample> examples, double target_accuracy,
                              std::span<const double> thresholds, AutomationTask task);

// empty_fraction * stage1 + (1 - empty_fraction) * stage2
double compose_two_stage(double empty_fraction, double stage1_auto_fraction,
                         double stage2_auto_fraction);

struct LaborModel {
  double baseline_hours = 14.6 * 52.0 * 40.0;  // volunteer effort behind baseline_images
  double baseline_images = 5'500'000.0;
  double corpus_images = 3'200'000.0;
  double hours_per_week = 40.0;
};

struct LaborSavings {
  double hours_saved = 0.0;
  double person_years_saved = 0.0;
};

LaborSavings labor_savings(const LaborModel& model, double automated_fraction);

void write_curve_csv(const std::filesystem::path& path, const ThresholdCurve& curve);
void write_curve_svg(const std::filesystem::path& path, const ThresholdCurve& curve,
                     const std::string& title);

}  // namespace ctpipe
