#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "error.hpp"

namespace pulsedet {

struct TrainingMeta {
  int shift = 0;
  double snr_db = 0.0;
  int wavelet_levels = 4;
  std::uint64_t seed = 0;
};

/// Row-major feature matrix with +1/-1 labels.
struct TrainingSet {
  std::size_t n_features = 0;
  std::vector<double> features;
  std::vector<int> labels;
  TrainingMeta meta;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }

  void append(std::span<const double> x, int label) {
    if (n_features == 0 && labels.empty()) n_features = x.size();
    detail::require(x.size() == n_features, "TrainingSet: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  void validate() const {
    detail::require(n_features > 0, "TrainingSet: no features");
    detail::require(features.size() == labels.size() * n_features,
                    "TrainingSet: row count does not match label count");
    bool has_pos = false;
    bool has_neg = false;
    for (int y : labels) {
      detail::require(y == 1 || y == -1, "TrainingSet: labels must be +1 or -1");
      has_pos = has_pos || y == 1;
      has_neg = has_neg || y == -1;
    }
    detail::require(has_pos && has_neg, "TrainingSet: both classes must be present");
    for (double v : features) {
      detail::require(std::isfinite(v), "TrainingSet: non-finite feature value");
    }
  }
};

struct TrainingSummary {
  std::size_t iterations = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  std::size_t support_vectors = 0;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  int shift = 0;
  double c_param = 1.0;
  TrainingSummary summary;

  std::size_t n_features() const noexcept { return weights.size(); }
};

struct SvmOptions {
  double c_param = 1.0;
  /// Relative duality-gap target: P - D <= tolerance * max(1, |P|).
  double tolerance = 1e-6;
  /// Cap on interior-point iterations.
  std::size_t max_iterations = 200;
  /// Optional feasible dual starting point (0 <= a_i <= C, sum a_i y_i = 0).
  std::optional<std::vector<double>> initial_alpha;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// 0.5 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))
inline double primal_objective(const TrainingSet& data, std::span<const double> weights, double bias,
                               double c_param) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double margin = data.labels[i] * (dot(weights, data.row(i)) + bias);
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * dot(weights, weights) + c_param * hinge;
}

namespace detail {

/// Exact minimizer of sum_i max(0, 1 - m_i - y_i b) over b, where m_i = y_i w.x_i.
/// Returns the midpoint of the optimal interval.
inline double optimal_bias(std::span<const double> margins_without_bias, std::span<const int> labels) {
  std::vector<double> pos_kinks;
  std::vector<double> neg_kinks;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    // y=+1: max(0, (1 - m) - b); y=-1: max(0, b - (m - 1))
    if (labels[i] > 0) {
      pos_kinks.push_back(1.0 - margins_without_bias[i]);
    } else {
      neg_kinks.push_back(margins_without_bias[i] - 1.0);
    }
  }
  std::sort(pos_kinks.begin(), pos_kinks.end());
  std::sort(neg_kinks.begin(), neg_kinks.end());
  std::vector<double> pos_prefix(pos_kinks.size() + 1, 0.0);
  std::vector<double> neg_prefix(neg_kinks.size() + 1, 0.0);
  for (std::size_t i = 0; i < pos_kinks.size(); ++i) pos_prefix[i + 1] = pos_prefix[i] + pos_kinks[i];
  for (std::size_t i = 0; i < neg_kinks.size(); ++i) neg_prefix[i + 1] = neg_prefix[i] + neg_kinks[i];

  auto loss = [&](double b) {
    // positive terms with kink > b contribute (kink - b)
    const auto p = static_cast<std::size_t>(
        std::upper_bound(pos_kinks.begin(), pos_kinks.end(), b) - pos_kinks.begin());
    const double pos_sum = (pos_prefix.back() - pos_prefix[p]) -
                           static_cast<double>(pos_kinks.size() - p) * b;
    // negative terms with kink < b contribute (b - kink)
    const auto q = static_cast<std::size_t>(
        std::lower_bound(neg_kinks.begin(), neg_kinks.end(), b) - neg_kinks.begin());
    const double neg_sum = static_cast<double>(q) * b - neg_prefix[q];
    return pos_sum + neg_sum;
  };

  std::vector<double> candidates;
  candidates.reserve(pos_kinks.size() + neg_kinks.size());
  candidates.insert(candidates.end(), pos_kinks.begin(), pos_kinks.end());
  candidates.insert(candidates.end(), neg_kinks.begin(), neg_kinks.end());
  std::sort(candidates.begin(), candidates.end());

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> values(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    values[i] = loss(candidates[i]);
    best = std::min(best, values[i]);
  }
  const double slack = 1e-12 * (1.0 + std::abs(best));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (values[i] <= best + slack) {
      lo = std::min(lo, candidates[i]);
      hi = std::max(hi, candidates[i]);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

namespace detail {

inline std::vector<double> weights_from_alpha(const TrainingSet& data, std::span<const double> alpha) {
  std::vector<double> w(data.n_features, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const auto xi = data.row(i);
    const double a = alpha[i] * data.labels[i];
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += a * xi[k];
  }
  return w;
}

}  // namespace detail

/// Soft-margin linear SVM with an unregularized bias.
///
/// Solves the dual QP  min 0.5 a'Qa - 1'a  s.t. y'a = 0, 0 <= a <= C  with a
/// primal-dual interior-point method (Mehrotra predictor-corrector). Q = ZZ'
/// has rank d, so each Newton system is reduced to a d x d Cholesky solve.
/// Every iterate is rounded to a feasible dual point and the run stops once
/// the duality gap against (w, b*) reaches the tolerance, with b* the exact
/// hinge minimizer for that w.
inline LinearModel train_linear_svm(const TrainingSet& data, const SvmOptions& options = {}) {
  data.validate();
  detail::require(options.c_param > 0.0 && std::isfinite(options.c_param), "svm: C must be > 0");
  detail::require(options.tolerance > 0.0, "svm: tolerance must be > 0");

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  const std::size_t n = data.size();
  const std::size_t d = data.n_features;
  const double c = options.c_param;
  const auto& labels = data.labels;
  const auto ni = static_cast<Eigen::Index>(n);
  const auto di = static_cast<Eigen::Index>(d);

  Mat z_mat(ni, di);
  Vec y(ni);
  for (std::size_t i = 0; i < n; ++i) {
    y(static_cast<Eigen::Index>(i)) = labels[i];
    for (std::size_t k = 0; k < d; ++k) {
      z_mat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = labels[i] * data.row(i)[k];
    }
  }

  Vec alpha = Vec::Constant(ni, 0.5 * c);
  if (options.initial_alpha) {
    const auto& init = *options.initial_alpha;
    detail::require(init.size() == n, "svm: initial_alpha has wrong length");
    double balance = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      detail::require(init[i] >= 0.0 && init[i] <= c, "svm: initial_alpha outside [0, C]");
      balance += init[i] * labels[i];
    }
    detail::require(std::abs(balance) <= 1e-9 * (1.0 + c * static_cast<double>(n)),
                    "svm: initial_alpha violates sum a_i y_i = 0");
    // Interior-point iterates must start strictly inside the box.
    for (std::size_t i = 0; i < n; ++i) alpha(static_cast<Eigen::Index>(i)) = 0.01 * c + 0.98 * init[i];
  }
  Vec zl = Vec::Ones(ni);
  Vec zu = Vec::Ones(ni);
  double beta = 0.0;

  LinearModel model;
  model.c_param = c;
  model.shift = data.meta.shift;
  std::vector<double> gap_trace;
  std::vector<double> margins(n);

  auto certify = [&](const Vec& iterate, std::size_t iter) {
    std::vector<double> a(n);
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::clamp(iterate(static_cast<Eigen::Index>(i)), 0.0, c);
      (labels[i] > 0 ? pos : neg) += a[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] > 0 && pos > neg) a[i] *= neg / pos;
      if (labels[i] < 0 && neg > pos) a[i] *= pos / neg;
    }
    auto w = detail::weights_from_alpha(data, a);
    for (std::size_t i = 0; i < n; ++i) margins[i] = labels[i] * dot(w, data.row(i));
    const double bias = detail::optimal_bias(margins, labels);
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) hinge += std::max(0.0, 1.0 - margins[i] - labels[i] * bias);
    const double wnorm = dot(w, w);
    const double primal = 0.5 * wnorm + c * hinge;
    const double dual = std::accumulate(a.begin(), a.end(), 0.0) - 0.5 * wnorm;
    const double gap = primal - dual;
    gap_trace.push_back(gap);
    if (!(gap <= options.tolerance * std::max(1.0, std::abs(primal)))) return false;
    model.weights = std::move(w);
    model.bias = bias;
    model.summary.iterations = iter;
    model.summary.primal_objective = primal;
    model.summary.dual_objective = dual;
    model.summary.support_vectors = static_cast<std::size_t>(
        std::count_if(a.begin(), a.end(), [&](double v) { return v > 1e-6 * c; }));
    return true;
  };

  auto max_step = [](const Vec& x, const Vec& dx) {
    double step = 1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (dx(i) < 0.0) step = std::min(step, -x(i) / dx(i));
    }
    return step;
  };

  const double n_pairs = 2.0 * static_cast<double>(n);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    if (certify(alpha, iter)) return model;

    const Vec slack = Vec::Constant(ni, c) - alpha;
    const Vec w = z_mat.transpose() * alpha;
    const Vec r_dual = z_mat * w - Vec::Ones(ni) + beta * y - zl + zu;
    const double r_eq = y.dot(alpha);
    const double mu = (alpha.dot(zl) + slack.dot(zu)) / n_pairs;

    // M = D + ZZ', D = zl/a + zu/(C-a); solves go through Woodbury.
    const Vec dinv = (zl.cwiseQuotient(alpha) + zu.cwiseQuotient(slack)).cwiseInverse();
    Mat g = Mat::Identity(di, di);
    g.noalias() += z_mat.transpose() * dinv.asDiagonal() * z_mat;
    const Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success) break;
    auto solve_m = [&](const Vec& r) -> Vec {
      const Vec dr = dinv.cwiseProduct(r);
      const Vec inner = llt.solve(z_mat.transpose() * dr);
      return dr - dinv.cwiseProduct(z_mat * inner);
    };
    const Vec m_y = solve_m(y);
    const double y_m_y = y.dot(m_y);

    struct Step {
      Vec da, dzl, dzu;
      double dbeta;
    };
    auto newton = [&](const Vec& comp_l, const Vec& comp_u) {
      const Vec rhs = -r_dual + comp_l.cwiseQuotient(alpha) - comp_u.cwiseQuotient(slack);
      const Vec u = solve_m(rhs);
      Step st;
      st.dbeta = (y.dot(u) + r_eq) / y_m_y;
      st.da = u - st.dbeta * m_y;
      st.dzl = (comp_l - zl.cwiseProduct(st.da)).cwiseQuotient(alpha);
      st.dzu = (comp_u + zu.cwiseProduct(st.da)).cwiseQuotient(slack);
      return st;
    };
    auto step_length = [&](const Step& st) {
      const double primal = std::min(max_step(alpha, st.da), max_step(slack, -st.da));
      const double dual = std::min(max_step(zl, st.dzl), max_step(zu, st.dzu));
      return std::min(primal, dual);
    };

    const Step affine = newton(-alpha.cwiseProduct(zl), -slack.cwiseProduct(zu));
    const double t_aff = step_length(affine);
    const double mu_aff = ((alpha + t_aff * affine.da).dot(zl + t_aff * affine.dzl) +
                           (slack - t_aff * affine.da).dot(zu + t_aff * affine.dzu)) /
                          n_pairs;
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
    const Vec comp_l = Vec::Constant(ni, sigma * mu) - alpha.cwiseProduct(zl) -
                       affine.da.cwiseProduct(affine.dzl);
    const Vec comp_u = Vec::Constant(ni, sigma * mu) - slack.cwiseProduct(zu) +
                       affine.da.cwiseProduct(affine.dzu);
    const Step st = newton(comp_l, comp_u);
    const double t = std::min(1.0, 0.995 * step_length(st));
    if (!(t > 0.0) || !std::isfinite(t)) break;
    alpha += t * st.da;
    zl += t * st.dzl;
    zu += t * st.dzu;
    beta += t * st.dbeta;
  }
  throw NumericError("svm: duality gap did not reach tolerance after " +
                         std::to_string(gap_trace.size()) + " iterations",
                     gap_trace);
}

}  // namespace pulsedet
