#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace pulsedet {

inline constexpr std::size_t kDb5Taps = 10;

struct WaveletFilterPair {
  std::array<double, kDb5Taps> lowpass{};
  std::array<double, kDb5Taps> highpass{};
};

enum class Boundary { periodic };

struct DecompositionConfig {
  int levels = 4;
  Boundary boundary = Boundary::periodic;
};

/// Detail coefficients of one decomposition level, used as detector input.
struct WaveletFeatures {
  int level = 0;
  std::vector<double> coefficients;
  std::size_t source_window_len = 0;

  std::size_t size() const noexcept { return coefficients.size(); }
};

/// Orthonormal Daubechies filter with five vanishing moments (10 taps).
///
/// Scaling coefficients from Daubechies' 1988 table (extremal phase),
/// normalized so that the taps sum to sqrt(2). The highpass filter is the
/// alternating flip g[k] = (-1)^k h[9-k].
inline const WaveletFilterPair& db5_filters() {
  static const WaveletFilterPair pair = [] {
    WaveletFilterPair p;
    p.lowpass = {0.16010239797419290,  0.60382926979718970,  0.72430852843777290,
                 0.13842814590132074,  -0.24229488706638203, -0.032244869584638375,
                 0.07757149384004572,  -0.006241490212798274, -0.012580751999081999,
                 0.0033357252854737712};
    for (std::size_t k = 0; k < kDb5Taps; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      p.highpass[k] = sign * p.lowpass[kDb5Taps - 1 - k];
    }
    return p;
  }();
  return pair;
}

struct DwtBands {
  std::vector<double> approx;
  std::vector<double> detail;
};

/// One analysis step: periodic correlation with each filter, keeping even phases.
///   approx[n] = sum_k h[k] x[(2n + k) mod N]
///   detail[n] = sum_k g[k] x[(2n + k) mod N]
inline DwtBands dwt_step(std::span<const double> signal, const WaveletFilterPair& filters,
                         Boundary boundary = Boundary::periodic) {
  (void)boundary;
  const std::size_t n = signal.size();
  detail::require(n >= 2 && n % 2 == 0,
                  "dwt_step: input length must be even and >= 2, got " + std::to_string(n));
  const std::size_t half = n / 2;
  DwtBands out{std::vector<double>(half, 0.0), std::vector<double>(half, 0.0)};
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0;
    double d = 0.0;
    std::size_t idx = (2 * i) % n;
    for (std::size_t k = 0; k < kDb5Taps; ++k) {
      const double x = signal[idx];
      a += filters.lowpass[k] * x;
      d += filters.highpass[k] * x;
      if (++idx == n) idx = 0;
    }
    out.approx[i] = a;
    out.detail[i] = d;
  }
  return out;
}

/// Inverse of dwt_step under the periodic boundary.
inline std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> detail,
                                     const WaveletFilterPair& filters) {
  detail::require(approx.size() == detail.size(),
                  "idwt_step: approx and detail lengths differ (" + std::to_string(approx.size()) +
                      " vs " + std::to_string(detail.size()) + ")");
  const std::size_t half = approx.size();
  const std::size_t n = 2 * half;
  std::vector<double> out(n, 0.0);
  if (half == 0) return out;
  for (std::size_t i = 0; i < half; ++i) {
    std::size_t idx = (2 * i) % n;
    for (std::size_t k = 0; k < kDb5Taps; ++k) {
      out[idx] += filters.lowpass[k] * approx[i] + filters.highpass[k] * detail[i];
      if (++idx == n) idx = 0;
    }
  }
  return out;
}

/// Full multi-level decomposition: details[0] is level 1 (finest).
struct Decomposition {
  std::vector<std::vector<double>> details;
  std::vector<double> approx;
};

inline void check_divisible(std::size_t len, int levels) {
  detail::require(levels >= 1, "wavelet.levels must be >= 1");
  detail::require(levels < 31, "wavelet.levels is too large");
  const std::size_t block = std::size_t{1} << levels;
  detail::require(len > 0 && len % block == 0,
                  "window length " + std::to_string(len) + " is not divisible by 2^" +
                      std::to_string(levels) + " = " + std::to_string(block));
}

inline Decomposition decompose(std::span<const double> signal, const DecompositionConfig& config,
                               const WaveletFilterPair& filters = db5_filters()) {
  check_divisible(signal.size(), config.levels);
  Decomposition out;
  std::vector<double> current(signal.begin(), signal.end());
  for (int level = 0; level < config.levels; ++level) {
    DwtBands bands = dwt_step(current, filters, config.boundary);
    out.details.push_back(std::move(bands.detail));
    current = std::move(bands.approx);
  }
  out.approx = std::move(current);
  return out;
}

inline std::vector<double> reconstruct(const Decomposition& parts,
                                       const WaveletFilterPair& filters = db5_filters()) {
  std::vector<double> current = parts.approx;
  for (auto it = parts.details.rbegin(); it != parts.details.rend(); ++it) {
    current = idwt_step(current, *it, filters);
  }
  return current;
}

/// Detail band of the deepest level: the detector's feature vector.
inline WaveletFeatures extract_features(std::span<const double> window,
                                        const DecompositionConfig& config) {
  check_divisible(window.size(), config.levels);
  const WaveletFilterPair& filters = db5_filters();
  std::vector<double> current(window.begin(), window.end());
  std::vector<double> detail_band;
  for (int level = 0; level < config.levels; ++level) {
    DwtBands bands = dwt_step(current, filters, config.boundary);
    current = std::move(bands.approx);
    detail_band = std::move(bands.detail);
  }
  return WaveletFeatures{config.levels, std::move(detail_band), window.size()};
}

/// Time-domain vector v with v . x == weights . extract_features(x) for every
/// window x of length `window_len`. Built by running the synthesis bank on a
/// detail band holding `weights` (the transform is orthonormal, so synthesis
/// is the adjoint of analysis).
inline std::vector<double> feature_adjoint(std::span<const double> weights, std::size_t window_len,
                                           const DecompositionConfig& config) {
  check_divisible(window_len, config.levels);
  const std::size_t expected = window_len >> config.levels;
  detail::require(weights.size() == expected,
                  "feature_adjoint: expected " + std::to_string(expected) + " weights, got " +
                      std::to_string(weights.size()));
  Decomposition parts;
  std::size_t len = window_len;
  for (int level = 0; level < config.levels; ++level) {
    len /= 2;
    parts.details.emplace_back(len, 0.0);
  }
  parts.details.back().assign(weights.begin(), weights.end());
  parts.approx.assign(expected, 0.0);
  return reconstruct(parts);
}

}  // namespace pulsedet
