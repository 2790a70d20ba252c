#include "ctpipe/threshold.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ctpipe/ensemble.hpp"

namespace ctpipe {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool count_within_one(const MultiTaskPrediction& p, const LabelSet& label) {
  return std::abs(argmax(p.count_probs) - label.count->index) <= 1;
}

}  // namespace

double confidence(std::span<const double> probs) {
  if (probs.empty()) throw DataError("confidence: empty probability vector");
  return *std::max_element(probs.begin(), probs.end());
}

double species_confidence(const MultiTaskPrediction& p) { return confidence(p.species_probs); }

double count_confidence(const MultiTaskPrediction& p) { return confidence(p.count_probs); }

double binary_confidence(const BinaryPrediction& p) { return std::max(p.p_animal, p.p_empty); }

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  grid.reserve(100);
  for (int i = 0; i < 100; ++i) grid.push_back(static_cast<double>(i) / 100.0);
  return grid;
}

ThresholdCurve sweep(std::span<const SweepExample> examples, std::span<const double> thresholds) {
  if (examples.empty()) throw DataError("sweep: empty prediction set");
  if (thresholds.empty()) throw ConfigError("sweep: empty threshold grid");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (thresholds[i] <= thresholds[i - 1]) {
      throw ConfigError("sweep: thresholds must be strictly increasing");
    }
  }

  ThresholdCurve curve;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t retained = 0, correct = 0, secondary = 0;
    for (const auto& e : examples) {
      if (e.confidence >= t) {
        ++retained;
        if (e.primary_correct) ++correct;
        if (e.secondary_correct) ++secondary;
      }
    }
    CurvePoint point;
    point.threshold = t;
    point.retained_fraction = static_cast<double>(retained) / static_cast<double>(examples.size());
    if (retained > 0) {
      point.accuracy = static_cast<double>(correct) / static_cast<double>(retained);
      point.secondary = static_cast<double>(secondary) / static_cast<double>(retained);
    }
    curve.points.push_back(point);
  }
  return curve;
}

std::vector<SweepExample> make_sweep_examples(const std::vector<MultiTaskPrediction>& preds,
                                              const std::vector<LabelSet>& labels,
                                              SweepMetric metric) {
  if (preds.size() != labels.size()) throw DataError("make_sweep_examples: length mismatch");
  std::vector<SweepExample> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const auto& label = labels[i];
    if (label.empty || !label.species || !label.count) {
      throw DataError("make_sweep_examples: labels must be non-empty with species and count");
    }
    SweepExample e;
    switch (metric) {
      case SweepMetric::top1:
      case SweepMetric::top5: {
        e.confidence = species_confidence(p);
        const auto top5 = top_n(p.species_probs,
                                std::min<int>(5, static_cast<int>(p.species_probs.size())));
        const bool hit1 = top5.front() == *label.species;
        const bool hit5 = std::find(top5.begin(), top5.end(), *label.species) != top5.end();
        e.primary_correct = metric == SweepMetric::top1 ? hit1 : hit5;
        e.secondary_correct = hit5;
        break;
      }
      case SweepMetric::within_one_bin: {
        e.confidence = count_confidence(p);
        e.primary_correct = argmax(p.count_probs) == label.count->index;
        e.secondary_correct = count_within_one(p, label);
        break;
      }
      case SweepMetric::binary_accuracy:
        throw ConfigError("make_sweep_examples: binary metric needs binary predictions");
    }
    out.push_back(e);
  }
  return out;
}

std::vector<SweepExample> make_sweep_examples_binary(const std::vector<BinaryPrediction>& preds,
                                                     const std::vector<LabelSet>& labels) {
  if (preds.size() != labels.size()) throw DataError("make_sweep_examples_binary: length mismatch");
  std::vector<SweepExample> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    SweepExample e;
    e.confidence = binary_confidence(preds[i]);
    const bool predicted_animal = preds[i].p_animal >= preds[i].p_empty;
    e.primary_correct = predicted_animal == !labels[i].empty;
    e.secondary_correct = e.primary_correct;
    out.push_back(e);
  }
  return out;
}

ThresholdCurve sweep(const std::vector<MultiTaskPrediction>& preds,
                     const std::vector<LabelSet>& labels, std::span<const double> thresholds,
                     SweepMetric metric) {
  return sweep(make_sweep_examples(preds, labels, metric), thresholds);
}

AutomationSummary match_human(std::span<const SweepExample> examples, double target_accuracy,
                              std::span<const double> thresholds, AutomationTask task) {
  const ThresholdCurve curve = sweep(examples, thresholds);
  double best_achievable = 0.0;
  for (const auto& point : curve.points) {
    if (point.accuracy) best_achievable = std::max(best_achievable, *point.accuracy);
  }
  for (const auto& point : curve.points) {
    if (point.accuracy && *point.accuracy >= target_accuracy) {
      AutomationSummary summary;
      summary.task = task;
      summary.matched_threshold = point.threshold;
      summary.automated_fraction_of_stage = point.retained_fraction;
      summary.total_automated_fraction = point.retained_fraction;
      summary.target_accuracy = target_accuracy;
      return summary;
    }
  }
  throw UnattainableError("match_human: target accuracy " + fmt(target_accuracy) +
                              " unattainable; best achievable on the grid is " +
                              fmt(best_achievable),
                          best_achievable);
}

double compose_two_stage(double empty_fraction, double stage1_auto_fraction,
                         double stage2_auto_fraction) {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string("compose_two_stage: ") + name + " must be in [0, 1]");
    }
  };
  check(empty_fraction, "empty_fraction");
  check(stage1_auto_fraction, "stage1_auto_fraction");
  check(stage2_auto_fraction, "stage2_auto_fraction");
  return empty_fraction * stage1_auto_fraction + (1.0 - empty_fraction) * stage2_auto_fraction;
}

LaborSavings labor_savings(const LaborModel& model, double automated_fraction) {
  if (model.baseline_hours <= 0.0 || model.baseline_images <= 0.0 || model.corpus_images <= 0.0 ||
      model.hours_per_week <= 0.0) {
    throw ConfigError("labor_savings: model fields must be positive");
  }
  if (!(automated_fraction >= 0.0 && automated_fraction <= 1.0)) {
    throw ConfigError("labor_savings: automated_fraction must be in [0, 1]");
  }
  const double hours_per_image = model.baseline_hours / model.baseline_images;
  LaborSavings s;
  s.hours_saved = model.corpus_images * automated_fraction * hours_per_image;
  s.person_years_saved = s.hours_saved / (52.0 * model.hours_per_week);
  return s;
}

void write_curve_csv(const std::filesystem::path& path, const ThresholdCurve& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write curve csv '" + path.string() + "'");
  out << "threshold,retained_fraction,accuracy,secondary_metric\n";
  for (const auto& p : curve.points) {
    out << fmt(p.threshold) << ',' << fmt(p.retained_fraction) << ','
        << (p.accuracy ? fmt(*p.accuracy) : "") << ','
        << (p.secondary ? fmt(*p.secondary) : "") << '\n';
  }
  if (!out) throw DataError("write failed for curve csv '" + path.string() + "'");
}

void write_curve_svg(const std::filesystem::path& path, const ThresholdCurve& curve,
                     const std::string& title) {
  constexpr int kW = 640, kH = 420;
  constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;

  auto x_of = [&](double threshold) { return kLeft + threshold * plot_w; };
  auto y_of = [&](double value) { return kTop + (1.0 - value) * plot_h; };

  auto polyline = [&](auto value_of, const char* color, const char* dash) {
    std::string pts;
    for (const auto& p : curve.points) {
      const auto v = value_of(p);
      if (!v) continue;
      pts += fmt(x_of(p.threshold)) + "," + fmt(y_of(*v)) + " ";
    }
    if (pts.empty()) return std::string();
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"" +
           (dash[0] ? " stroke-dasharray=\"" + std::string(dash) + "\"" : "") + " points=\"" + pts +
           "\"/>\n";
  };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write curve svg '" + path.string() + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << title << "</text>\n";
  // axes
  out << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kH - kBottom << "\" stroke=\"black\"/>\n"
      << "  <line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight
      << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; ++i) {
    const double v = static_cast<double>(i) / 10.0;
    out << "  <text x=\"" << fmt(x_of(v)) << "\" y=\"" << kH - kBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(v)
        << "</text>\n";
    out << "  <text x=\"" << kLeft - 8 << "\" y=\"" << fmt(y_of(v) + 3)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(v)
        << "</text>\n";
  }
  out << "  <text x=\"" << kW / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">confidence "
         "threshold</text>\n";
  out << polyline([](const CurvePoint& p) { return p.accuracy; }, "#c0392b", "");
  out << polyline([](const CurvePoint& p) { return std::optional<double>(p.retained_fraction); },
                  "#2980b9", "6,3");
  out << "  <text x=\"" << kW - kRight << "\" y=\"" << kTop - 6
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << "accuracy (solid), retained fraction (dashed)</text>\n";
  out << "</svg>\n";
  if (!out) throw DataError("write failed for curve svg '" + path.string() + "'");
}

}  // namespace ctpipe
