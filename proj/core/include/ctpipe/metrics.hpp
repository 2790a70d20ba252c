#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctpipe/domain.hpp"

namespace ctpipe {

// Example-based multi-label metrics (binarized at > 0.5): per example with
// truth set Y and predicted set Z, accuracy |Y∩Z|/|Y∪Z|, precision
// |Y∩Z|/|Z|, recall |Y∩Z|/|Y|, averaged over examples. Empty-set guards:
// |Y∪Z|=0 -> accuracy 1; |Z|=0 -> precision 1 iff Y empty; |Y|=0 -> recall 1
// iff Z empty.
struct MultilabelMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

double topk_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<int>& labels,
                     int k);

// fraction of count predictions whose argmax bin is within one of the truth
double within_one_bin(const std::vector<std::vector<double>>& count_preds,
                      const std::vector<int>& count_labels);

MultilabelMetrics multilabel_metrics(
    const std::vector<std::array<double, AttributeSet::kAttributes>>& attr_preds,
    const std::vector<std::array<bool, AttributeSet::kAttributes>>& attr_labels,
    bool pool_over_attributes = false);

// classes with no labeled examples are absent from the map, never 0
std::map<int, double> per_class_accuracy(const std::vector<std::vector<double>>& preds,
                                         const std::vector<int>& labels);

// counts[true][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::vector<double>>& preds,
                                                       const std::vector<int>& labels, int n_classes);

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double count_top1 = 0.0;
  double within_one_bin = 0.0;
  std::map<int, double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;
  std::optional<MultilabelMetrics> multilabel;  // absent when labels lack attributes
  std::size_t n_examples = 0;
};

// Full evaluation of multitask predictions against labels. Top-5 is capped
// at the class count.
EvalReport build_report(const std::vector<MultiTaskPrediction>& preds,
                        const std::vector<LabelSet>& labels, int n_species);

std::string report_to_json(const EvalReport& report, const std::vector<std::string>& class_names);
void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       const std::vector<std::string>& class_names);
void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<std::size_t>>& confusion,
                         const std::vector<std::string>& class_names);
void write_per_class_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& class_names);

}  // namespace ctpipe
