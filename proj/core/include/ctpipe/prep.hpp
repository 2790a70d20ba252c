#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ctpipe/errors.hpp"
#include "ctpipe/rng.hpp"

namespace ctpipe {

// Dense CHW tensor. Deliberately dimension-generic: tests run on tiny
// shapes, flat feature vectors ride along as channels x 1 x 1.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // CHW order

  static Tensor zeros(int c, int h, int w);
  static Tensor from_features(std::span<const double> features);  // d x 1 x 1

  double& at(int c, int h, int w);
  double at(int c, int h, int w) const;
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const Tensor&) const = default;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;            // population stddev, floored at kStddevFloor
  std::vector<int> clamped_channels;     // channels whose stddev hit the floor

  int channels() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kStddevFloor = 1e-8;

struct AugmentSpec {
  int crop_h = 224;  // the conventional crop on 256x256 inputs
  int crop_w = 224;
  double flip_probability = 0.5;
  std::pair<double, double> brightness_delta_range = {0.0, 0.0};
  std::pair<double, double> contrast_factor_range = {1.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean / population stddev over all pixels of all images, per channel.
ChannelStats compute_channel_stats(std::span<const Tensor> images);

// (x - mean[c]) / stddev[c]
Tensor normalize(const Tensor& image, const ChannelStats& stats);
Tensor denormalize(const Tensor& image, const ChannelStats& stats);

// Fixed pipeline: crop -> horizontal flip -> brightness (additive delta) ->
// contrast (multiplicative about the image mean). Deterministic given the
// rng state.
Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng);

// building blocks
Tensor crop(const Tensor& image, int top, int left, int h, int w);
Tensor hflip(const Tensor& image);
Tensor adjust_brightness(const Tensor& image, double delta);
Tensor adjust_contrast(const Tensor& image, double factor);

// Per-dimension stats for flat feature vectors (dimension = channel).
ChannelStats feature_stats(const std::vector<std::vector<double>>& features);
std::vector<double> normalize_features(std::span<const double> features, const ChannelStats& stats);

}  // namespace ctpipe
