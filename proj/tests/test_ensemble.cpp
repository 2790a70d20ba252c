#include "ctpipe/ensemble.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "ctpipe/rng.hpp"

using namespace ctpipe;
namespace fs = std::filesystem;

namespace {

// the published three-network averaging example over seven species:
// zebra, impala, topi, dikdik, reedbuck, grants gazelle, eland
constexpr int kZebra = 0, kImpala = 1, kTopi = 2;

MultiTaskPrediction with_species(std::vector<double> species) {
  MultiTaskPrediction p;
  p.species_probs = std::move(species);
  p.count_probs.assign(12, 1.0 / 12.0);
  p.attribute_probs.assign(6, 0.5);
  return p;
}

std::vector<MultiTaskPrediction> reference_members() {
  return {
      with_species({0.80, 0.00, 0.10, 0.07, 0.03, 0.00, 0.00}),
      with_species({0.05, 0.90, 0.00, 0.04, 0.00, 0.01, 0.00}),
      with_species({0.50, 0.08, 0.40, 0.00, 0.02, 0.00, 0.00}),
  };
}

MultiTaskPrediction random_prediction(Rng& rng, int k) {
  MultiTaskPrediction p;
  auto normalized = [&](int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (auto& x : v) {
      x = rng.uniform(0.0, 1.0) + 1e-6;
      sum += x;
    }
    for (auto& x : v) x /= sum;
    return v;
  };
  p.species_probs = normalized(k);
  p.count_probs = normalized(12);
  p.attribute_probs.assign(6, 0.0);
  for (auto& x : p.attribute_probs) x = rng.uniform(0.0, 1.0);
  return p;
}

}  // namespace

TEST(AveragePredictions, ReferenceThreeNetworkExample) {
  const auto members = reference_members();
  const MultiTaskPrediction avg = average_predictions(members);

  EXPECT_NEAR(avg.species_probs[kZebra], 0.45, 1e-4);
  EXPECT_NEAR(avg.species_probs[kImpala], 0.3267, 1e-4);
  EXPECT_NEAR(avg.species_probs[kTopi], 0.1667, 1e-4);
  EXPECT_EQ(argmax(avg.species_probs), kZebra);

  const auto top3 = top_n(avg.species_probs, 3);
  EXPECT_EQ(top3, (std::vector<int>{kZebra, kImpala, kTopi}));
}

TEST(AveragePredictions, SingleMemberIsIdentity) {
  const auto members = reference_members();
  const std::vector<MultiTaskPrediction> one{members[0]};
  EXPECT_EQ(average_predictions(one), members[0]);
}

TEST(AveragePredictions, PermutationInvariant) {
  auto members = reference_members();
  const MultiTaskPrediction a = average_predictions(members);
  std::swap(members[0], members[2]);
  const MultiTaskPrediction b = average_predictions(members);
  for (std::size_t i = 0; i < a.species_probs.size(); ++i) {
    EXPECT_NEAR(a.species_probs[i], b.species_probs[i], 1e-12);
  }
}

TEST(AveragePredictions, IdenticalMembersAverageToThemselves) {
  Rng rng(1);
  const MultiTaskPrediction p = random_prediction(rng, 9);
  const std::vector<MultiTaskPrediction> members{p, p, p};
  const MultiTaskPrediction avg = average_predictions(members);
  for (std::size_t i = 0; i < p.species_probs.size(); ++i) {
    EXPECT_NEAR(avg.species_probs[i], p.species_probs[i], 1e-15);
  }
}

TEST(AveragePredictions, PreservesNormalizationInvariants) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<MultiTaskPrediction> members;
    const int m = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < m; ++i) members.push_back(random_prediction(rng, 7));
    const MultiTaskPrediction avg = average_predictions(members);
    EXPECT_TRUE(validate_prediction(avg).ok());
  }
}

TEST(AveragePredictions, Errors) {
  EXPECT_THROW(average_predictions(std::vector<MultiTaskPrediction>{}), DataError);

  auto members = reference_members();
  members[1].species_probs.push_back(0.0);  // dimension mismatch
  EXPECT_THROW(average_predictions(members), DataError);
}

TEST(AverageBinary, MeanOfBothFields) {
  const std::vector<BinaryPrediction> members{{0.9, 0.1}, {0.5, 0.5}, {0.7, 0.3}};
  const BinaryPrediction avg = average_binary(members);
  EXPECT_NEAR(avg.p_animal, 0.7, 1e-12);
  EXPECT_NEAR(avg.p_empty, 0.3, 1e-12);
}

TEST(TopN, OneHotAndUniformTies) {
  const std::vector<double> onehot{0.0, 0.0, 1.0, 0.0};
  EXPECT_EQ(top_n(onehot, 1), (std::vector<int>{2}));

  const std::vector<double> uniform(6, 1.0 / 6.0);
  EXPECT_EQ(top_n(uniform, 3), (std::vector<int>{0, 1, 2}));  // ties -> lowest ids
}

TEST(TopN, RangeChecked) {
  const std::vector<double> v{0.5, 0.5};
  EXPECT_THROW(top_n(v, 0), DataError);
  EXPECT_THROW(top_n(v, 3), DataError);
  EXPECT_EQ(top_n(v, 2).size(), 2u);
}

TEST(AggregateEvent, IdenticalImagePredictionsUnchanged) {
  Rng rng(3);
  const MultiTaskPrediction p = random_prediction(rng, 5);
  const std::vector<MultiTaskPrediction> images{p, p, p};
  const MultiTaskPrediction out = aggregate_event(images);
  for (std::size_t i = 0; i < p.species_probs.size(); ++i) {
    EXPECT_NEAR(out.species_probs[i], p.species_probs[i], 1e-15);
  }
}

TEST(AggregateEvent, HandComputedMajorityCase) {
  // two images lean class 0 at 0.6, one leans class 1 at 0.9; the mean
  // flips the event to class 1: (0.6+0.6+0.05)/3 = 0.4167 < (0.3+0.3+0.9)/3 = 0.5
  const std::vector<MultiTaskPrediction> images{
      with_species({0.60, 0.30, 0.10}),
      with_species({0.60, 0.30, 0.10}),
      with_species({0.05, 0.90, 0.05}),
  };
  const MultiTaskPrediction out = aggregate_event(images);
  EXPECT_NEAR(out.species_probs[0], 1.25 / 3.0, 1e-12);
  EXPECT_NEAR(out.species_probs[1], 0.5, 1e-12);
  EXPECT_EQ(argmax(out.species_probs), 1);
}

TEST(AggregateEvent, SingleImagePassesThrough) {
  const auto members = reference_members();
  const std::vector<MultiTaskPrediction> one{members[2]};
  EXPECT_EQ(aggregate_event(one), members[2]);
}

TEST(PredictionFile, RoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "ctpipe_pred_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<PredictionRecord> records;
  records.push_back({"im0", false, "species", {0.2, 0.8}});
  records.push_back({"im0", false, "count", {0.5, 0.25, 0.25}});
  records.push_back({"im0", false, "attributes", {0.1, 0.9, 0.3, 0.2, 0.05, 0.01}});
  records.push_back({"ev0", true, "species", {0.3, 0.7}});

  write_predictions(dir / "p.jsonl", records);
  const auto loaded = read_predictions(dir / "p.jsonl");
  EXPECT_EQ(loaded, records);
}
