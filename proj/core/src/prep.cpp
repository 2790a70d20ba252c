#include "ctpipe/prep.hpp"

#include <cmath>

namespace ctpipe {

Tensor Tensor::zeros(int c, int h, int w) {
  if (c < 1 || h < 1 || w < 1) throw DataError("tensor: dimensions must be positive");
  Tensor t;
  t.channels = c;
  t.height = h;
  t.width = w;
  t.data.assign(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0);
  return t;
}

Tensor Tensor::from_features(std::span<const double> features) {
  Tensor t = zeros(static_cast<int>(features.size()), 1, 1);
  std::copy(features.begin(), features.end(), t.data.begin());
  return t;
}

double& Tensor::at(int c, int h, int w) {
  return data[(static_cast<std::size_t>(c) * static_cast<std::size_t>(height) +
               static_cast<std::size_t>(h)) *
                  static_cast<std::size_t>(width) +
              static_cast<std::size_t>(w)];
}

double Tensor::at(int c, int h, int w) const {
  return data[(static_cast<std::size_t>(c) * static_cast<std::size_t>(height) +
               static_cast<std::size_t>(h)) *
                  static_cast<std::size_t>(width) +
              static_cast<std::size_t>(w)];
}

void AugmentSpec::validate() const {
  if (crop_h < 1 || crop_w < 1) throw ConfigError("augment spec: crop size must be positive");
  if (flip_probability < 0.0 || flip_probability > 1.0) {
    throw ConfigError("augment spec: flip_probability must be in [0, 1]");
  }
  if (brightness_delta_range.first > brightness_delta_range.second) {
    throw ConfigError("augment spec: brightness_delta_range is not well-ordered");
  }
  if (contrast_factor_range.first > contrast_factor_range.second) {
    throw ConfigError("augment spec: contrast_factor_range is not well-ordered");
  }
}

ChannelStats compute_channel_stats(std::span<const Tensor> images) {
  if (images.empty()) throw DataError("compute_channel_stats: empty image sequence");
  const int channels = images[0].channels;
  for (const auto& img : images) {
    if (img.channels != channels) throw DataError("compute_channel_stats: channel count mismatch");
  }

  ChannelStats stats;
  stats.mean.assign(static_cast<std::size_t>(channels), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(channels), 0.0);

  std::vector<double> sum(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> sum_sq(static_cast<std::size_t>(channels), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(channels), 0);
  for (const auto& img : images) {
    const std::size_t plane = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double x = img.data[base + i];
        sum[static_cast<std::size_t>(c)] += x;
        sum_sq[static_cast<std::size_t>(c)] += x * x;
      }
      count[static_cast<std::size_t>(c)] += plane;
    }
  }
  for (int c = 0; c < channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double n = static_cast<double>(count[ci]);
    const double mean = sum[ci] / n;
    const double var = std::max(0.0, sum_sq[ci] / n - mean * mean);
    double sd = std::sqrt(var);
    if (sd < kStddevFloor) {
      sd = kStddevFloor;
      stats.clamped_channels.push_back(c);
    }
    stats.mean[ci] = mean;
    stats.stddev[ci] = sd;
  }
  return stats;
}

Tensor normalize(const Tensor& image, const ChannelStats& stats) {
  if (image.channels != stats.channels()) throw DataError("normalize: channel count mismatch");
  Tensor out = image;
  const std::size_t plane = static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width);
  for (int c = 0; c < image.channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t base = ci * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      out.data[base + i] = (image.data[base + i] - stats.mean[ci]) / stats.stddev[ci];
    }
  }
  return out;
}

Tensor denormalize(const Tensor& image, const ChannelStats& stats) {
  if (image.channels != stats.channels()) throw DataError("denormalize: channel count mismatch");
  Tensor out = image;
  const std::size_t plane = static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width);
  for (int c = 0; c < image.channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t base = ci * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      out.data[base + i] = image.data[base + i] * stats.stddev[ci] + stats.mean[ci];
    }
  }
  return out;
}

Tensor crop(const Tensor& image, int top, int left, int h, int w) {
  if (h < 1 || w < 1 || top < 0 || left < 0 || top + h > image.height || left + w > image.width) {
    throw DataError("crop: window does not fit inside the image");
  }
  Tensor out = Tensor::zeros(image.channels, h, w);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(c, y, x) = image.at(c, top + y, left + x);
      }
    }
  }
  return out;
}

Tensor hflip(const Tensor& image) {
  Tensor out = image;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
      }
    }
  }
  return out;
}

Tensor adjust_brightness(const Tensor& image, double delta) {
  Tensor out = image;
  for (auto& x : out.data) x += delta;
  return out;
}

Tensor adjust_contrast(const Tensor& image, double factor) {
  double mean = 0.0;
  for (double x : image.data) mean += x;
  mean /= static_cast<double>(image.data.size());
  Tensor out = image;
  for (auto& x : out.data) x = mean + factor * (x - mean);
  return out;
}

Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.crop_h > image.height || spec.crop_w > image.width) {
    throw DataError("augment: crop size exceeds image size");
  }
  const int top = static_cast<int>(rng.below(static_cast<std::size_t>(image.height - spec.crop_h + 1)));
  const int left = static_cast<int>(rng.below(static_cast<std::size_t>(image.width - spec.crop_w + 1)));
  Tensor out = crop(image, top, left, spec.crop_h, spec.crop_w);

  if (rng.bernoulli(spec.flip_probability)) out = hflip(out);

  const double delta = rng.uniform(spec.brightness_delta_range.first, spec.brightness_delta_range.second);
  if (delta != 0.0) out = adjust_brightness(out, delta);

  const double factor = rng.uniform(spec.contrast_factor_range.first, spec.contrast_factor_range.second);
  if (factor != 1.0) out = adjust_contrast(out, factor);

  return out;
}

ChannelStats feature_stats(const std::vector<std::vector<double>>& features) {
  std::vector<Tensor> tensors;
  tensors.reserve(features.size());
  for (const auto& f : features) tensors.push_back(Tensor::from_features(f));
  return compute_channel_stats(tensors);
}

std::vector<double> normalize_features(std::span<const double> features, const ChannelStats& stats) {
  if (static_cast<int>(features.size()) != stats.channels()) {
    throw DataError("normalize_features: dimension mismatch");
  }
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out[i] = (features[i] - stats.mean[i]) / stats.stddev[i];
  }
  return out;
}

}  // namespace ctpipe
