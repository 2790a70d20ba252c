#include "ctpipe/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ctpipe {

using nlohmann::json;

namespace {

void check_lengths(std::size_t preds, std::size_t labels, const char* op) {
  if (preds != labels) {
    throw DataError(std::string(op) + ": prediction/label length mismatch (" +
                    std::to_string(preds) + " vs " + std::to_string(labels) + ")");
  }
}

// rank of `target` under (descending probability, ascending index)
bool in_top_k(std::span<const double> probs, int target, int k) {
  const double pt = probs[static_cast<std::size_t>(target)];
  int rank = 0;
  for (int j = 0; j < static_cast<int>(probs.size()); ++j) {
    const double pj = probs[static_cast<std::size_t>(j)];
    if (pj > pt || (pj == pt && j < target)) ++rank;
  }
  return rank < k;
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

double topk_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<int>& labels,
                     int k) {
  check_lengths(preds.size(), labels.size(), "topk_accuracy");
  if (k < 1) throw ConfigError("topk_accuracy: k must be >= 1");
  if (preds.empty()) throw DataError("topk_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= static_cast<int>(preds[i].size())) {
      throw DataError("topk_accuracy: label out of range");
    }
    if (in_top_k(preds[i], label, k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double within_one_bin(const std::vector<std::vector<double>>& count_preds,
                      const std::vector<int>& count_labels) {
  check_lengths(count_preds.size(), count_labels.size(), "within_one_bin");
  if (count_preds.empty()) throw DataError("within_one_bin: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < count_preds.size(); ++i) {
    const int predicted = argmax(count_preds[i]);
    if (std::abs(predicted - count_labels[i]) <= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count_preds.size());
}

MultilabelMetrics multilabel_metrics(
    const std::vector<std::array<double, AttributeSet::kAttributes>>& attr_preds,
    const std::vector<std::array<bool, AttributeSet::kAttributes>>& attr_labels,
    bool pool_over_attributes) {
  check_lengths(attr_preds.size(), attr_labels.size(), "multilabel_metrics");
  if (attr_preds.empty()) throw DataError("multilabel_metrics: empty input");
  constexpr int kA = AttributeSet::kAttributes;

  if (pool_over_attributes) {
    // label-based: per-attribute rates over all examples, averaged over the
    // attributes
    MultilabelMetrics m;
    for (int a = 0; a < kA; ++a) {
      std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < attr_preds.size(); ++i) {
        const bool z = attr_preds[i][static_cast<std::size_t>(a)] > 0.5;
        const bool y = attr_labels[i][static_cast<std::size_t>(a)];
        if (y && z) ++tp;
        if (!y && !z) ++tn;
        if (!y && z) ++fp;
        if (y && !z) ++fn;
      }
      const double n = static_cast<double>(attr_preds.size());
      m.accuracy += static_cast<double>(tp + tn) / n;
      m.precision += tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      m.recall += tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    m.accuracy /= kA;
    m.precision /= kA;
    m.recall /= kA;
    return m;
  }

  MultilabelMetrics m;
  for (std::size_t i = 0; i < attr_preds.size(); ++i) {
    int y_size = 0, z_size = 0, inter = 0;
    for (int a = 0; a < kA; ++a) {
      const bool z = attr_preds[i][static_cast<std::size_t>(a)] > 0.5;
      const bool y = attr_labels[i][static_cast<std::size_t>(a)];
      y_size += y;
      z_size += z;
      inter += (y && z);
    }
    const int uni = y_size + z_size - inter;
    m.accuracy += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    m.precision += z_size == 0 ? (y_size == 0 ? 1.0 : 0.0)
                               : static_cast<double>(inter) / z_size;
    m.recall += y_size == 0 ? (z_size == 0 ? 1.0 : 0.0)
                            : static_cast<double>(inter) / y_size;
  }
  const double n = static_cast<double>(attr_preds.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  return m;
}

std::map<int, double> per_class_accuracy(const std::vector<std::vector<double>>& preds,
                                         const std::vector<int>& labels) {
  check_lengths(preds.size(), labels.size(), "per_class_accuracy");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& [correct, total] = tally[labels[i]];
    ++total;
    if (argmax(preds[i]) == labels[i]) ++correct;
  }
  std::map<int, double> out;
  for (const auto& [cls, counts] : tally) {
    out[cls] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::vector<double>>& preds,
                                                       const std::vector<int>& labels,
                                                       int n_classes) {
  check_lengths(preds.size(), labels.size(), "confusion_matrix");
  std::vector<std::vector<std::size_t>> m(static_cast<std::size_t>(n_classes),
                                          std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int truth = labels[i];
    const int predicted = argmax(preds[i]);
    if (truth < 0 || truth >= n_classes || predicted < 0 || predicted >= n_classes) {
      throw DataError("confusion_matrix: class index out of range");
    }
    ++m[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }
  return m;
}

EvalReport build_report(const std::vector<MultiTaskPrediction>& preds,
                        const std::vector<LabelSet>& labels, int n_species) {
  check_lengths(preds.size(), labels.size(), "build_report");
  if (preds.empty()) throw DataError("build_report: empty input");

  std::vector<std::vector<double>> species_preds, count_preds;
  std::vector<int> species_labels, count_labels;
  std::vector<std::array<double, AttributeSet::kAttributes>> attr_preds;
  std::vector<std::array<bool, AttributeSet::kAttributes>> attr_labels;

  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& label = labels[i];
    if (label.empty || !label.species || !label.count) {
      throw DataError("build_report: labels must be non-empty with species and count");
    }
    species_preds.push_back(preds[i].species_probs);
    species_labels.push_back(*label.species);
    count_preds.push_back(preds[i].count_probs);
    count_labels.push_back(label.count->index);
    if (label.attributes &&
        preds[i].attribute_probs.size() == static_cast<std::size_t>(AttributeSet::kAttributes)) {
      std::array<double, AttributeSet::kAttributes> p{};
      for (int a = 0; a < AttributeSet::kAttributes; ++a) {
        p[static_cast<std::size_t>(a)] = preds[i].attribute_probs[static_cast<std::size_t>(a)];
      }
      attr_preds.push_back(p);
      attr_labels.push_back(label.attributes->flags());
    }
  }

  EvalReport r;
  r.n_examples = preds.size();
  r.top1 = topk_accuracy(species_preds, species_labels, 1);
  r.top5 = topk_accuracy(species_preds, species_labels, std::min(5, n_species));
  r.count_top1 = topk_accuracy(count_preds, count_labels, 1);
  r.within_one_bin = within_one_bin(count_preds, count_labels);
  r.per_class_accuracy = per_class_accuracy(species_preds, species_labels);
  r.confusion = confusion_matrix(species_preds, species_labels, n_species);
  if (!attr_preds.empty()) r.multilabel = multilabel_metrics(attr_preds, attr_labels);
  return r;
}

std::string report_to_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  json j;
  j["n_examples"] = report.n_examples;
  j["species_top1"] = report.top1;
  j["species_top5"] = report.top5;
  j["count_top1"] = report.count_top1;
  j["count_within_one_bin"] = report.within_one_bin;
  json per_class = json::object();
  for (const auto& [cls, acc] : report.per_class_accuracy) {
    const std::string name = cls >= 0 && cls < static_cast<int>(class_names.size())
                                 ? class_names[static_cast<std::size_t>(cls)]
                                 : std::to_string(cls);
    per_class[name] = acc;
  }
  j["per_class_accuracy"] = per_class;
  j["confusion"] = report.confusion;
  if (report.multilabel) {
    j["multilabel"] = {{"accuracy", report.multilabel->accuracy},
                       {"precision", report.multilabel->precision},
                       {"recall", report.multilabel->recall}};
  } else {
    j["multilabel"] = nullptr;
  }
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  out << report_to_json(report, class_names) << '\n';
  if (!out) throw DataError("write failed for report '" + path.string() + "'");
}

void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<std::size_t>>& confusion,
                         const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write confusion csv '" + path.string() + "'");
  out << "true\\predicted";
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    out << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c));
  }
  out << '\n';
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    out << (r < class_names.size() ? class_names[r] : std::to_string(r));
    for (std::size_t c = 0; c < confusion[r].size(); ++c) out << ',' << confusion[r][c];
    out << '\n';
  }
  if (!out) throw DataError("write failed for confusion csv '" + path.string() + "'");
}

void write_per_class_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write per-class csv '" + path.string() + "'");
  out << "class_id,class_name,n_examples,accuracy\n";
  for (const auto& [cls, acc] : report.per_class_accuracy) {
    std::size_t n = 0;
    if (cls >= 0 && static_cast<std::size_t>(cls) < report.confusion.size()) {
      for (std::size_t c = 0; c < report.confusion[static_cast<std::size_t>(cls)].size(); ++c) {
        n += report.confusion[static_cast<std::size_t>(cls)][c];
      }
    }
    const std::string name = cls >= 0 && cls < static_cast<int>(class_names.size())
                                 ? class_names[static_cast<std::size_t>(cls)]
                                 : std::to_string(cls);
    out << cls << ',' << name << ',' << n << ',' << fmt(acc) << '\n';
  }
  if (!out) throw DataError("write failed for per-class csv '" + path.string() + "'");
}

}  // namespace ctpipe
