#include "ctpipe/prep.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ctpipe;

namespace {

Tensor filled(int c, int h, int w, double value) {
  Tensor t = Tensor::zeros(c, h, w);
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

Tensor random_tensor(int c, int h, int w, Rng& rng) {
  Tensor t = Tensor::zeros(c, h, w);
  for (auto& x : t.data) x = rng.uniform(-4.0, 4.0);
  return t;
}

}  // namespace

TEST(ChannelStatsTest, ConstantImageClampsStddev) {
  const std::vector<Tensor> images{filled(1, 2, 2, 5.0)};
  const ChannelStats stats = compute_channel_stats(images);
  EXPECT_DOUBLE_EQ(stats.mean[0], 5.0);
  EXPECT_DOUBLE_EQ(stats.stddev[0], kStddevFloor);
  ASSERT_EQ(stats.clamped_channels.size(), 1u);
  EXPECT_EQ(stats.clamped_channels[0], 0);
}

TEST(ChannelStatsTest, TwoPixelHandCase) {
  Tensor t = Tensor::zeros(1, 1, 2);
  t.data = {0.0, 2.0};
  const ChannelStats stats = compute_channel_stats(std::vector<Tensor>{t});
  EXPECT_DOUBLE_EQ(stats.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.stddev[0], 1.0);  // population stddev
  EXPECT_TRUE(stats.clamped_channels.empty());
}

TEST(ChannelStatsTest, EmptyInputRejected) {
  EXPECT_THROW(compute_channel_stats(std::vector<Tensor>{}), DataError);
}

TEST(ChannelStatsTest, PerChannelOverAllImages) {
  Rng rng(3);
  std::vector<Tensor> images;
  for (int i = 0; i < 5; ++i) images.push_back(random_tensor(3, 4, 4, rng));
  const ChannelStats stats = compute_channel_stats(images);

  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& img : images) {
      for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
          sum += img.at(c, y, x);
          ++n;
        }
      }
    }
    EXPECT_NEAR(stats.mean[static_cast<std::size_t>(c)], sum / static_cast<double>(n), 1e-12);
  }
}

TEST(NormalizeTest, HandCases) {
  ChannelStats stats;
  stats.mean = {1.0};
  stats.stddev = {2.0};

  Tensor t = Tensor::zeros(1, 1, 2);
  t.data = {1.0, 5.0};
  const Tensor out = normalize(t, stats);
  EXPECT_DOUBLE_EQ(out.data[0], 0.0);  // pixel equal to the mean
  EXPECT_DOUBLE_EQ(out.data[1], 2.0);  // (5 - 1) / 2
}

TEST(NormalizeTest, ChannelMismatchRejected) {
  ChannelStats stats;
  stats.mean = {0.0, 0.0};
  stats.stddev = {1.0, 1.0};
  EXPECT_THROW(normalize(filled(1, 2, 2, 0.0), stats), DataError);
}

TEST(NormalizeTest, InverseRecoversInput) {
  Rng rng(4);
  const Tensor t = random_tensor(2, 3, 5, rng);
  const ChannelStats stats = compute_channel_stats(std::vector<Tensor>{t});
  const Tensor back = denormalize(normalize(t, stats), stats);
  ASSERT_EQ(back.data.size(), t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    EXPECT_NEAR(back.data[i], t.data[i], 1e-12);
  }
}

TEST(NormalizeTest, NormalizedStatsAreZeroOne) {
  Rng rng(5);
  std::vector<Tensor> images;
  for (int i = 0; i < 8; ++i) images.push_back(random_tensor(2, 4, 4, rng));
  const ChannelStats stats = compute_channel_stats(images);

  std::vector<Tensor> normalized;
  for (const auto& img : images) normalized.push_back(normalize(img, stats));
  const ChannelStats after = compute_channel_stats(normalized);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(after.mean[static_cast<std::size_t>(c)], 0.0, 1e-9);
    EXPECT_NEAR(after.stddev[static_cast<std::size_t>(c)], 1.0, 1e-9);
  }
}

TEST(AugmentTest, AllTransformsDisabledIsIdentity) {
  Rng data_rng(6);
  const Tensor t = random_tensor(1, 4, 4, data_rng);
  AugmentSpec spec;
  spec.crop_h = 4;
  spec.crop_w = 4;
  spec.flip_probability = 0.0;
  spec.brightness_delta_range = {0.0, 0.0};
  spec.contrast_factor_range = {1.0, 1.0};

  Rng rng(0);
  EXPECT_EQ(augment(t, spec, rng), t);
}

TEST(AugmentTest, FlipIsInvolution) {
  Rng rng(7);
  const Tensor t = random_tensor(3, 5, 6, rng);
  EXPECT_EQ(hflip(hflip(t)), t);
}

TEST(AugmentTest, DeterministicUnderSeed) {
  Rng data_rng(8);
  const Tensor t = random_tensor(2, 8, 8, data_rng);
  AugmentSpec spec;
  spec.crop_h = 5;
  spec.crop_w = 5;
  spec.flip_probability = 0.5;
  spec.brightness_delta_range = {-0.3, 0.3};
  spec.contrast_factor_range = {0.8, 1.2};
  spec.seed = 99;

  Rng a(spec.seed), b(spec.seed);
  EXPECT_EQ(augment(t, spec, a), augment(t, spec, b));
}

TEST(AugmentTest, OutputShapeIsCropSizeAndFinite) {
  Rng data_rng(9);
  const Tensor t = random_tensor(3, 10, 12, data_rng);
  AugmentSpec spec;
  spec.crop_h = 7;
  spec.crop_w = 5;
  spec.brightness_delta_range = {-1.0, 1.0};
  spec.contrast_factor_range = {0.5, 1.5};

  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Tensor out = augment(t, spec, rng);
    EXPECT_EQ(out.channels, 3);
    EXPECT_EQ(out.height, 7);
    EXPECT_EQ(out.width, 5);
    for (double x : out.data) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(AugmentTest, CropLargerThanImageRejected) {
  const Tensor t = filled(1, 4, 4, 0.0);
  AugmentSpec spec;
  spec.crop_h = 5;
  spec.crop_w = 4;
  Rng rng(0);
  EXPECT_THROW(augment(t, spec, rng), DataError);
}

TEST(CropTest, WindowIsContiguousSubregion) {
  Rng rng(10);
  const Tensor t = random_tensor(2, 6, 7, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(6));
    const int w = 1 + static_cast<int>(rng.below(7));
    const int top = static_cast<int>(rng.below(static_cast<std::size_t>(6 - h + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::size_t>(7 - w + 1)));
    const Tensor window = crop(t, top, left, h, w);
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          EXPECT_DOUBLE_EQ(window.at(c, y, x), t.at(c, top + y, left + x));
        }
      }
    }
  }
}

TEST(AugmentTest, PipelineOrderIsCropFlipBrightnessContrast) {
  Rng data_rng(12);
  const Tensor t = random_tensor(1, 6, 6, data_rng);
  AugmentSpec spec;
  spec.crop_h = 4;
  spec.crop_w = 4;
  spec.flip_probability = 1.0;  // forced flip
  spec.brightness_delta_range = {0.7, 0.7};
  spec.contrast_factor_range = {1.5, 1.5};

  Rng rng(3);
  const Tensor out = augment(t, spec, rng);

  // replay the same draws manually, applying the stages in the fixed order
  Rng replay(3);
  const int top = static_cast<int>(replay.below(3));
  const int left = static_cast<int>(replay.below(3));
  ASSERT_TRUE(replay.bernoulli(1.0));
  const double delta = replay.uniform(0.7, 0.7);
  const double factor = replay.uniform(1.5, 1.5);
  const Tensor expected = adjust_contrast(
      adjust_brightness(hflip(crop(t, top, left, 4, 4)), delta), factor);

  ASSERT_EQ(out.data.size(), expected.data.size());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.data[i], expected.data[i]);
  }
}

TEST(ContrastTest, ScalesAboutImageMean) {
  Tensor t = Tensor::zeros(1, 1, 2);
  t.data = {1.0, 3.0};  // mean 2
  const Tensor out = adjust_contrast(t, 2.0);
  EXPECT_DOUBLE_EQ(out.data[0], 0.0);  // 2 + 2*(1-2)
  EXPECT_DOUBLE_EQ(out.data[1], 4.0);  // 2 + 2*(3-2)
}

TEST(FeatureStatsTest, PerDimensionNormalization) {
  const std::vector<std::vector<double>> features{{0.0, 10.0}, {2.0, 10.0}};
  const ChannelStats stats = feature_stats(features);
  EXPECT_DOUBLE_EQ(stats.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.stddev[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.mean[1], 10.0);
  ASSERT_EQ(stats.clamped_channels.size(), 1u);
  EXPECT_EQ(stats.clamped_channels[0], 1);

  const auto normalized = normalize_features(features[0], stats);
  EXPECT_DOUBLE_EQ(normalized[0], -1.0);
}

TEST(AugmentSpecTest, BadRangesRejected) {
  AugmentSpec spec;
  spec.crop_h = 2;
  spec.crop_w = 2;
  spec.brightness_delta_range = {0.5, -0.5};
  EXPECT_THROW(spec.validate(), ConfigError);

  spec = AugmentSpec{};
  spec.crop_h = 0;
  spec.crop_w = 2;
  EXPECT_THROW(spec.validate(), ConfigError);

  spec = AugmentSpec{};
  spec.crop_h = 2;
  spec.crop_w = 2;
  spec.flip_probability = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
}
