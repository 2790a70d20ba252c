#include "ctpipe/domain.hpp"

#include <gtest/gtest.h>

using namespace ctpipe;

TEST(CountToBin, BinBoundaries) {
  EXPECT_EQ(count_to_bin(1).index, 0);
  EXPECT_EQ(count_to_bin(1).label(), "1");
  EXPECT_EQ(count_to_bin(10).index, 9);
  EXPECT_EQ(count_to_bin(11).index, 10);
  EXPECT_EQ(count_to_bin(30).index, 10);
  EXPECT_EQ(count_to_bin(30).label(), "11-50");
  EXPECT_EQ(count_to_bin(50).index, 10);
  EXPECT_EQ(count_to_bin(51).index, 11);
  EXPECT_EQ(count_to_bin(51).label(), "51+");
  EXPECT_EQ(count_to_bin(5000).index, 11);
}

TEST(CountToBin, NonPositiveCountRejected) {
  EXPECT_THROW(count_to_bin(0), DataError);
  EXPECT_THROW(count_to_bin(-3), DataError);
}

TEST(CountToBin, MonotoneAndTotal) {
  int prev = count_to_bin(1).index;
  for (int n = 2; n <= 200; ++n) {
    const int cur = count_to_bin(n).index;
    EXPECT_GE(cur, prev) << "not monotone at n=" << n;
    prev = cur;
  }
}

TEST(CountToBin, RepresentativeRoundTrips) {
  for (int b = 0; b < CountBin::kBins; ++b) {
    const CountBin bin{b};
    EXPECT_EQ(count_to_bin(bin_representative(bin)).index, b);
  }
}

TEST(Taxonomy, BijectionAndErrors) {
  Taxonomy tax({"wildebeest", "zebra", "gazelle"});
  EXPECT_EQ(tax.size(), 3);
  EXPECT_EQ(tax.name(1), "zebra");
  EXPECT_EQ(tax.id("gazelle"), 2);
  EXPECT_EQ(tax.id("okapi"), std::nullopt);
  EXPECT_THROW(tax.name(3), DataError);
  EXPECT_THROW(Taxonomy({"a", "a"}), DataError);
}

TEST(LabelSet, Invariants) {
  EXPECT_TRUE(LabelSet::empty_label().valid());
  EXPECT_TRUE(LabelSet::animal(3, count_to_bin(2)).valid());

  LabelSet bad;
  bad.empty = true;
  bad.species = 1;
  EXPECT_FALSE(bad.valid());

  LabelSet missing_count;
  missing_count.empty = false;
  missing_count.species = 1;
  EXPECT_FALSE(missing_count.valid());
}

TEST(PropagateEventLabels, CopiesEventLabelToAllImages) {
  CaptureEvent event;
  event.event_id = "ev1";
  event.label = LabelSet::animal(7, count_to_bin(3));
  for (int i = 0; i < 3; ++i) {
    ImageRecord img;
    img.image_id = "ev1_im" + std::to_string(i);
    img.event_id = "ev1";
    event.images.push_back(img);
  }

  const CaptureEvent out = propagate_event_labels(event);
  ASSERT_EQ(out.images.size(), 3u);
  for (const auto& img : out.images) {
    EXPECT_EQ(img.label, event.label);
  }
}

TEST(PropagateEventLabels, SingleImageAndIdempotence) {
  CaptureEvent event;
  event.event_id = "ev2";
  event.label = LabelSet::empty_label();
  event.images.push_back(ImageRecord{"ev2_im0", "ev2", {1.0, 2.0}, LabelSet::animal(0, count_to_bin(1))});

  const CaptureEvent once = propagate_event_labels(event);
  EXPECT_EQ(once.images[0].label, event.label);
  EXPECT_EQ(once.images.size(), event.images.size());

  const CaptureEvent twice = propagate_event_labels(once);
  EXPECT_EQ(twice, once);
}

namespace {

MultiTaskPrediction uniform_prediction(int k_species, int k_count) {
  MultiTaskPrediction p;
  p.species_probs.assign(static_cast<std::size_t>(k_species), 1.0 / k_species);
  p.count_probs.assign(static_cast<std::size_t>(k_count), 1.0 / k_count);
  p.attribute_probs.assign(6, 0.5);
  return p;
}

}  // namespace

TEST(ValidatePrediction, UniformIsOk) {
  EXPECT_TRUE(validate_prediction(uniform_prediction(48, 12)).ok());
}

TEST(ValidatePrediction, BrokenSpeciesNormalization) {
  auto p = uniform_prediction(10, 12);
  p.species_probs[0] = 0.0;  // sums to 0.9
  const auto report = validate_prediction(p);
  ASSERT_FALSE(report.ok());
  EXPECT_NE(std::find(report.violations.begin(), report.violations.end(), "species normalization"),
            report.violations.end());
}

TEST(ValidatePrediction, AttributeRange) {
  auto p = uniform_prediction(4, 12);
  p.attribute_probs[2] = 1.3;
  const auto report = validate_prediction(p);
  ASSERT_FALSE(report.ok());
  EXPECT_NE(std::find(report.violations.begin(), report.violations.end(), "attribute range"),
            report.violations.end());
}

TEST(ValidatePrediction, NeverThrows) {
  MultiTaskPrediction p;  // everything empty
  EXPECT_NO_THROW(validate_prediction(p));
  p.species_probs = {0.5, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_NO_THROW(validate_prediction(p));
  EXPECT_FALSE(validate_prediction(p).ok());
}

TEST(ValidatePrediction, Binary) {
  EXPECT_TRUE(validate_prediction(BinaryPrediction{0.3, 0.7}).ok());
  EXPECT_FALSE(validate_prediction(BinaryPrediction{0.3, 0.6}).ok());
}

TEST(Argmax, TieBreaksTowardLowestIndex) {
  const std::vector<double> v{0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(v), 1);
  const std::vector<double> u{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(argmax(u), 0);
}
