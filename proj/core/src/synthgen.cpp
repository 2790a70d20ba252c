#include "ctpipe/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctpipe/rng.hpp"

namespace ctpipe {

namespace {

std::string padded(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::size_t digits(std::size_t n) {
  std::size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("synth config: n_classes must be >= 2");
  if (feature_dim < 2) throw ConfigError("synth config: feature_dim must be >= 2");
  if (imbalance_exponent < 0.0) throw ConfigError("synth config: imbalance_exponent must be >= 0");
  if (class_frequencies) {
    if (static_cast<int>(class_frequencies->size()) != n_classes) {
      throw ConfigError("synth config: class_frequencies size must equal n_classes");
    }
    double sum = 0.0;
    for (double f : *class_frequencies) {
      if (f <= 0.0) throw ConfigError("synth config: class_frequencies entries must be > 0");
      sum += f;
    }
    if (sum <= 0.0) throw ConfigError("synth config: class_frequencies must have positive mass");
  }
  if (empty_fraction < 0.0 || empty_fraction >= 1.0) {
    throw ConfigError("synth config: empty_fraction must be in [0, 1)");
  }
  double ipe_sum = 0.0;
  for (double p : images_per_event) {
    if (p < 0.0) throw ConfigError("synth config: images_per_event entries must be >= 0");
    ipe_sum += p;
  }
  if (std::fabs(ipe_sum - 1.0) > 1e-9) {
    throw ConfigError("synth config: images_per_event must sum to 1");
  }
  if (noise_rate < 0.0 || noise_rate > 1.0) {
    throw ConfigError("synth config: noise_rate must be in [0, 1]");
  }
  if (n_events < 1) throw ConfigError("synth config: n_events must be >= 1");
  if (class_separation <= 0.0) throw ConfigError("synth config: class_separation must be > 0");
  for (double m : attribute_marginals) {
    if (m < 0.0 || m > 1.0) throw ConfigError("synth config: attribute_marginals must be in [0, 1]");
  }
}

SynthMeta synth_meta(const SynthConfig& cfg) {
  cfg.validate();
  SynthMeta meta;
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const auto k = static_cast<std::size_t>(cfg.n_classes);

  meta.empty_center.assign(d, 0.0);

  // Axis-aligned grid: class c sits at separation * (1 + c/d) along axis
  // c mod d. Minimum pairwise center distance (empty center included) is
  // exactly class_separation for any d >= 2.
  meta.class_centers.assign(k, std::vector<double>(d, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t axis = c % d;
    const double radius = cfg.class_separation * static_cast<double>(1 + c / d);
    meta.class_centers[c][axis] = radius;
  }

  meta.class_probs.assign(k, 0.0);
  if (cfg.class_frequencies) {
    meta.class_probs = *cfg.class_frequencies;
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      meta.class_probs[c] = std::pow(static_cast<double>(c + 1), -cfg.imbalance_exponent);
    }
  }
  double total = 0.0;
  for (double p : meta.class_probs) total += p;
  for (double& p : meta.class_probs) p /= total;

  // truncated geometric over bin indices; the success rate varies by class
  // so per-class count distributions genuinely differ
  meta.count_bin_probs.assign(k, {});
  for (std::size_t c = 0; c < k; ++c) {
    const double q = 0.3 + 0.4 * static_cast<double>(c + 1) / static_cast<double>(k);
    double norm = 0.0;
    for (int b = 0; b < CountBin::kBins; ++b) {
      meta.count_bin_probs[c][static_cast<std::size_t>(b)] = q * std::pow(1.0 - q, b);
      norm += meta.count_bin_probs[c][static_cast<std::size_t>(b)];
    }
    for (auto& p : meta.count_bin_probs[c]) p /= norm;
  }

  meta.attribute_marginals = cfg.attribute_marginals;
  return meta;
}

Dataset generate(const SynthConfig& cfg) {
  const SynthMeta meta = synth_meta(cfg);
  Rng rng(cfg.seed);

  const auto n_events = static_cast<std::size_t>(cfg.n_events);
  const std::size_t id_width = digits(n_events == 0 ? 1 : n_events - 1);

  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(cfg.n_classes));
  const std::size_t name_width = digits(static_cast<std::size_t>(cfg.n_classes - 1));
  for (int c = 0; c < cfg.n_classes; ++c) {
    names.push_back("species_" + padded(static_cast<std::size_t>(c), name_width));
  }

  std::vector<CaptureEvent> events;
  events.reserve(n_events);

  for (std::size_t e = 0; e < n_events; ++e) {
    CaptureEvent event;
    event.event_id = "ev" + padded(e, id_width);

    const bool is_empty = rng.bernoulli(cfg.empty_fraction);
    const std::size_t n_images = 1 + rng.categorical(std::span<const double>(cfg.images_per_event));

    if (is_empty) {
      event.label = LabelSet::empty_label();
    } else {
      const auto species = static_cast<int>(rng.categorical(meta.class_probs));
      const auto bin_probs = std::span<const double>(
          meta.count_bin_probs[static_cast<std::size_t>(species)]);
      const CountBin bin{static_cast<int>(rng.categorical(bin_probs))};
      AttributeSet attrs;
      for (int i = 0; i < AttributeSet::kAttributes; ++i) {
        attrs.set_flag(i, rng.bernoulli(meta.attribute_marginals[static_cast<std::size_t>(i)]));
      }
      event.label = LabelSet::animal(species, bin, attrs);
    }

    for (std::size_t i = 0; i < n_images; ++i) {
      ImageRecord img;
      img.image_id = event.event_id + "_im" + std::to_string(i);
      img.event_id = event.event_id;

      const std::vector<double>* center = &meta.empty_center;
      if (!event.label.empty) {
        const bool noisy = rng.bernoulli(cfg.noise_rate);
        if (!noisy) center = &meta.class_centers[static_cast<std::size_t>(*event.label.species)];
      }
      img.features.resize(static_cast<std::size_t>(cfg.feature_dim));
      for (auto& x : img.features) x = rng.normal();
      for (std::size_t dim = 0; dim < img.features.size(); ++dim) {
        img.features[dim] += (*center)[dim];
      }
      event.images.push_back(std::move(img));
    }
    events.push_back(propagate_event_labels(std::move(event)));
  }

  return Dataset(Taxonomy(std::move(names)), std::move(events));
}

int oracle_label(std::span<const double> features, const SynthConfig& cfg) {
  const SynthMeta meta = synth_meta(cfg);
  if (features.size() != meta.empty_center.size()) {
    throw DataError("oracle_label: feature dimension mismatch");
  }
  int best = 0;
  double best_d = squared_distance(features, meta.class_centers[0]);
  for (int c = 1; c < cfg.n_classes; ++c) {
    const double dist = squared_distance(features, meta.class_centers[static_cast<std::size_t>(c)]);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

bool oracle_is_empty(std::span<const double> features, const SynthConfig& cfg) {
  const SynthMeta meta = synth_meta(cfg);
  if (features.size() != meta.empty_center.size()) {
    throw DataError("oracle_is_empty: feature dimension mismatch");
  }
  const double empty_d = squared_distance(features, meta.empty_center);
  const int nearest = oracle_label(features, cfg);
  const double class_d =
      squared_distance(features, meta.class_centers[static_cast<std::size_t>(nearest)]);
  return empty_d <= class_d;
}

}  // namespace ctpipe
