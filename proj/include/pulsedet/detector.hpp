#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "signalgen.hpp"
#include "svm.hpp"
#include "wavelet.hpp"

namespace pulsedet {

/// Everything needed to synthesize windows: pulse shape, noise, feature transform.
struct PulseSetup {
  ChirpSpec chirp;
  NoiseSpec noise;
  DecompositionConfig wavelet;
  NoiseLayout layout = NoiseLayout::leading;

  std::size_t window_len() const noexcept { return chirp.num_samples; }

  std::size_t feature_len() const noexcept { return chirp.num_samples >> wavelet.levels; }

  void validate() const {
    chirp.validate();
    noise.validate();
    check_divisible(chirp.num_samples, wavelet.levels);
  }

  /// Chirp rescaled to `snr_db` against this setup's noise.
  std::vector<double> pulse(double snr_db) const {
    return scale_to_snr(generate_chirp(chirp), snr_db, noise);
  }

  NoiseSpec noise_with_seed(std::uint64_t seed) const {
    NoiseSpec n = noise;
    n.seed = seed;
    return n;
  }
};

struct CalibratedDetector {
  LinearModel model;
  double threshold = 0.0;
  double target_pfa = 1e-3;
  std::size_t calibration_n = 0;

  int shift() const noexcept { return model.shift; }
};

inline double score(const LinearModel& model, std::span<const double> features) {
  detail::require(features.size() == model.weights.size(),
                  "score: feature dimension " + std::to_string(features.size()) +
                      " does not match model dimension " + std::to_string(model.weights.size()));
  return dot(model.weights, features) + model.bias;
}

inline double score(const LinearModel& model, const WaveletFeatures& features) {
  return score(model, features.coefficients);
}

inline std::size_t min_calibration_size(double target_pfa) {
  detail::require(target_pfa > 0.0, "target_pfa must be > 0");
  return static_cast<std::size_t>(std::ceil(10.0 / target_pfa - 1e-9));
}

/// Order-statistic threshold: the smallest score t such that the fraction of
/// scores strictly above t is at most `target_pfa`. For target_pfa >= 1 the
/// threshold sits just below the minimum so that every score fires.
inline double threshold_for_rate(std::span<const double> scores, double target_pfa) {
  detail::require(!scores.empty(), "threshold_for_rate: no scores");
  detail::require(target_pfa > 0.0, "threshold_for_rate: target_pfa must be > 0");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  if (target_pfa >= 1.0) {
    return std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity());
  }
  const std::size_t n = sorted.size();
  const auto allowed =
      static_cast<std::size_t>(std::floor(target_pfa * static_cast<double>(n) + 1e-9));
  // Scanning ascending, the first score whose strict exceedance count fits is the answer.
  std::size_t i = 0;
  while (i < n) {
    std::size_t last = i;
    while (last + 1 < n && sorted[last + 1] == sorted[i]) ++last;
    const std::size_t above = n - (last + 1);
    if (above <= allowed) return sorted[i];
    i = last + 1;
  }
  return sorted.back();
}

inline CalibratedDetector calibrate_threshold(const LinearModel& model,
                                              std::span<const double> noise_scores,
                                              double target_pfa) {
  detail::require(target_pfa > 0.0 && target_pfa < 1.0, "calibrate: target_pfa must be in (0, 1)");
  const std::size_t required = min_calibration_size(target_pfa);
  if (noise_scores.size() < required) {
    throw ConfigError("calibrate: " + std::to_string(noise_scores.size()) +
                      " noise scores supplied, at least " + std::to_string(required) +
                      " required for target_pfa " + std::to_string(target_pfa));
  }
  return CalibratedDetector{model, threshold_for_rate(noise_scores, target_pfa), target_pfa,
                            noise_scores.size()};
}

inline int decide(double smooth_score, double threshold) noexcept {
  return smooth_score > threshold ? 1 : -1;
}

inline int classify(const CalibratedDetector& det, std::span<const double> features) {
  return decide(score(det.model, features), det.threshold);
}

inline int classify(const CalibratedDetector& det, const WaveletFeatures& features) {
  return classify(det, features.coefficients);
}

/// Positive rows come from shift-matched pulse windows, negative rows from
/// pure noise windows. Each row has its own noise stream.
inline TrainingSet build_training_set(int shift, std::size_t n_pos, std::size_t n_neg,
                                      double snr_db, const PulseSetup& setup, std::uint64_t seed) {
  setup.validate();
  detail::require(n_pos >= 1 && n_neg >= 1, "build_training_set: n_pos and n_neg must be >= 1");
  detail::require(shift >= 0 && static_cast<std::size_t>(shift) < setup.window_len(),
                  "build_training_set: shift must be in [0, window_len)");
  const auto pulse = setup.pulse(snr_db);
  const NoiseSpec noise = setup.noise_with_seed(seed);
  const auto channel = static_cast<std::uint64_t>(shift);

  TrainingSet set;
  set.n_features = setup.feature_len();
  set.features.reserve((n_pos + n_neg) * set.n_features);
  set.labels.reserve(n_pos + n_neg);
  set.meta = TrainingMeta{shift, snr_db, setup.wavelet.levels, seed};
  for (std::size_t i = 0; i < n_pos; ++i) {
    const auto frame = make_training_window(static_cast<std::size_t>(shift), pulse, noise,
                                            stream_key(StreamPurpose::training_positive, i, channel),
                                            setup.layout);
    set.append(extract_features(frame.samples, setup.wavelet).coefficients, 1);
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    const auto window = generate_noise(setup.window_len(), noise,
                                       stream_key(StreamPurpose::training_negative, i, channel));
    set.append(extract_features(window, setup.wavelet).coefficients, -1);
  }
  return set;
}

/// Smooth scores of `n` independent pure-noise windows, one stream per window.
inline std::vector<double> noise_scores(const LinearModel& model, const PulseSetup& setup,
                                        std::size_t n, std::uint64_t seed, StreamPurpose purpose,
                                        std::uint64_t channel = 0, unsigned workers = 1) {
  const NoiseSpec noise = setup.noise_with_seed(seed);
  std::vector<double> out(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto window = generate_noise(setup.window_len(), noise, stream_key(purpose, i, channel));
    out[i] = score(model, extract_features(window, setup.wavelet));
  });
  return out;
}

}  // namespace pulsedet
