#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "rng.hpp"

namespace pulsedet {

/// Binomial rate with its Wilson score interval.
struct RateEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline constexpr double kZ95 = 1.959963984540054;

inline RateEstimate wilson_interval(std::size_t successes, std::size_t trials, double z = kZ95) {
  detail::require(trials > 0, "wilson_interval: no trials");
  detail::require(successes <= trials, "wilson_interval: successes exceed trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // Clamp so the interval always brackets p despite rounding at p = 0 or 1.
  return RateEstimate{successes, trials, p, std::min(p, std::max(0.0, center - half)),
                      std::max(p, std::min(1.0, center + half))};
}

/// Intervals overlap (shared point counts).
inline bool intervals_overlap(const RateEstimate& a, const RateEstimate& b) noexcept {
  return a.ci_low <= b.ci_high && b.ci_low <= a.ci_high;
}

/// Square matrix stored row-major.
struct SquareMatrix {
  std::size_t dim = 0;
  std::vector<double> values;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n) : dim(n), values(n * n, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * dim + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
};

/// Unbiased (n - 1) sample covariance of the rows of a row-major n x p
/// matrix, accumulated in one pass with co-moment updates.
inline SquareMatrix sample_covariance(std::span<const double> rows, std::size_t p) {
  detail::require(p > 0 && rows.size() % p == 0, "covariance: row data is not a multiple of p");
  const std::size_t n = rows.size() / p;
  detail::require(n >= 2, "covariance: need at least two observations");
  std::vector<double> mean(p, 0.0);
  std::vector<double> delta(p);
  SquareMatrix comoment(p);
  for (std::size_t i = 0; i < n; ++i) {
    const double count = static_cast<double>(i + 1);
    const double* x = rows.data() + i * p;
    for (std::size_t a = 0; a < p; ++a) {
      delta[a] = x[a] - mean[a];
      mean[a] += delta[a] / count;
    }
    for (std::size_t a = 0; a < p; ++a) {
      const double post = x[a] - mean[a];
      for (std::size_t b = 0; b < p; ++b) comoment(b, a) += delta[b] * post;
    }
  }
  SquareMatrix cov(p);
  const double scale = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      const double v = 0.5 * (comoment(a, b) + comoment(b, a)) * scale;
      cov(a, b) = v;
      cov(b, a) = v;
    }
  }
  return cov;
}

inline std::vector<double> symmetric_eigenvalues(const SquareMatrix& m) {
  Eigen::MatrixXd mat(m.dim, m.dim);
  for (std::size_t r = 0; r < m.dim; ++r) {
    for (std::size_t c = 0; c < m.dim; ++c) mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mat, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

inline SquareMatrix correlation_from_covariance(const SquareMatrix& cov) {
  SquareMatrix corr(cov.dim);
  for (std::size_t a = 0; a < cov.dim; ++a) {
    for (std::size_t b = 0; b < cov.dim; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      corr(a, b) = denom > 0.0 ? cov(a, b) / denom : 0.0;
    }
  }
  return corr;
}

/// Entrywise bootstrap standard errors of the sample covariance.
inline SquareMatrix bootstrap_covariance_se(std::span<const double> rows, std::size_t p,
                                            std::size_t resamples, std::uint64_t seed) {
  detail::require(resamples >= 2, "bootstrap: need at least two resamples");
  const std::size_t n = rows.size() / p;
  detail::require(n >= 2, "bootstrap: need at least two observations");
  SquareMatrix sum(p);
  SquareMatrix sum_sq(p);
  std::vector<double> sample(n * p);
  for (std::size_t r = 0; r < resamples; ++r) {
    StreamRng rng(seed, stream_key(StreamPurpose::bootstrap, r));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = rng.below(n);
      std::copy_n(rows.data() + pick * p, p, sample.data() + i * p);
    }
    const auto cov = sample_covariance(sample, p);
    for (std::size_t k = 0; k < p * p; ++k) {
      sum.values[k] += cov.values[k];
      sum_sq.values[k] += cov.values[k] * cov.values[k];
    }
  }
  SquareMatrix se(p);
  const double b = static_cast<double>(resamples);
  for (std::size_t k = 0; k < p * p; ++k) {
    const double mean = sum.values[k] / b;
    const double var = std::max(0.0, (sum_sq.values[k] - b * mean * mean) / (b - 1.0));
    se.values[k] = std::sqrt(var);
  }
  return se;
}

}  // namespace pulsedet
