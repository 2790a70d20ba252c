#include "ctpipe/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace ctpipe {

using nlohmann::json;

std::vector<double> average_distributions(std::span<const std::vector<double>> members) {
  if (members.empty()) throw DataError("average: empty member sequence");
  const std::size_t dim = members[0].size();
  for (const auto& m : members) {
    if (m.size() != dim) throw DataError("average: member dimension mismatch");
  }
  std::vector<double> out(dim, 0.0);
  for (const auto& m : members) {
    for (std::size_t i = 0; i < dim; ++i) out[i] += m[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (auto& x : out) x *= inv;
  return out;
}

MultiTaskPrediction average_predictions(std::span<const MultiTaskPrediction> members) {
  if (members.empty()) throw DataError("average_predictions: empty member sequence");
  std::vector<std::vector<double>> species, count, attrs;
  species.reserve(members.size());
  count.reserve(members.size());
  attrs.reserve(members.size());
  for (const auto& m : members) {
    species.push_back(m.species_probs);
    count.push_back(m.count_probs);
    attrs.push_back(m.attribute_probs);
  }
  MultiTaskPrediction out;
  out.species_probs = average_distributions(species);
  out.count_probs = average_distributions(count);
  out.attribute_probs = average_distributions(attrs);
  return out;
}

BinaryPrediction average_binary(std::span<const BinaryPrediction> members) {
  if (members.empty()) throw DataError("average_binary: empty member sequence");
  BinaryPrediction out{0.0, 0.0};
  for (const auto& m : members) {
    out.p_animal += m.p_animal;
    out.p_empty += m.p_empty;
  }
  out.p_animal /= static_cast<double>(members.size());
  out.p_empty /= static_cast<double>(members.size());
  return out;
}

std::vector<int> top_n(std::span<const double> probs, int n) {
  if (n < 1 || n > static_cast<int>(probs.size())) {
    throw DataError("top_n: n out of range (n=" + std::to_string(n) + ", classes=" +
                    std::to_string(probs.size()) + ")");
  }
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = probs[static_cast<std::size_t>(a)];
    const double pb = probs[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  order.resize(static_cast<std::size_t>(n));
  return order;
}

MultiTaskPrediction aggregate_event(std::span<const MultiTaskPrediction> image_predictions) {
  return average_predictions(image_predictions);
}

BinaryPrediction aggregate_event_binary(std::span<const BinaryPrediction> image_predictions) {
  return average_binary(image_predictions);
}

void write_predictions(const std::filesystem::path& path,
                       std::span<const PredictionRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions '" + path.string() + "'");
  for (const auto& r : records) {
    json j;
    j[r.is_event ? "event_id" : "image_id"] = r.id;
    j["head"] = r.head;
    j["probs"] = r.probs;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed for predictions '" + path.string() + "'");
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions '" + path.string() + "'");
  std::vector<PredictionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("predictions parse error at line " + std::to_string(line_no) + ": " + e.what());
    }
    PredictionRecord r;
    if (j.contains("image_id")) {
      r.id = j["image_id"].get<std::string>();
      r.is_event = false;
    } else if (j.contains("event_id")) {
      r.id = j["event_id"].get<std::string>();
      r.is_event = true;
    } else {
      throw DataError("predictions line " + std::to_string(line_no) + " lacks image_id/event_id");
    }
    r.head = j.at("head").get<std::string>();
    r.probs = j.at("probs").get<std::vector<double>>();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ctpipe
