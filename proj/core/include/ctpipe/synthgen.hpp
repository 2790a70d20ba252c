#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ctpipe/manifest.hpp"

namespace ctpipe {

// Desk-scale stand-in for a camera-trap corpus: heavy class imbalance, a
// large empty fraction, bursts of images per event, and event-label noise
// (animal-labeled events whose member images are actually empty).
struct SynthConfig {
  int n_classes = 48;
  int feature_dim = 8;
  double imbalance_exponent = 1.0;  // class c frequency ~ (c+1)^-exponent
  // explicit per-class frequencies; overrides the power law when set
  std::optional<std::vector<double>> class_frequencies;
  double empty_fraction = 0.75;
  std::array<double, 3> images_per_event = {0.0, 0.0, 1.0};  // P(1), P(2), P(3)
  double noise_rate = 0.0;
  int n_events = 1000;
  std::uint64_t seed = 0;
  double class_separation = 6.0;  // min distance between feature centers, in noise stddevs
  // marginal rates for standing, resting, moving, eating, interacting, young
  std::array<double, 6> attribute_marginals = {0.25, 0.085, 0.25, 0.25, 0.005, 0.018};

  void validate() const;  // ConfigError naming the offending field
};

// Everything a test oracle needs about the generating distributions.
// Pure function of the config, no RNG involved.
struct SynthMeta {
  std::vector<std::vector<double>> class_centers;   // k x d
  std::vector<double> empty_center;                 // d, the origin
  std::vector<double> class_probs;                  // k, normalized
  std::vector<std::array<double, CountBin::kBins>> count_bin_probs;  // k x 12
  std::array<double, 6> attribute_marginals;
};

SynthMeta synth_meta(const SynthConfig& cfg);

Dataset generate(const SynthConfig& cfg);

// Nearest class center (Bayes answer under the generative model); ties break
// toward the lower id. Independent oracle for classifier tests.
int oracle_label(std::span<const double> features, const SynthConfig& cfg);

// True when the empty-class center is at least as close as every species
// center.
bool oracle_is_empty(std::span<const double> features, const SynthConfig& cfg);

}  // namespace ctpipe
