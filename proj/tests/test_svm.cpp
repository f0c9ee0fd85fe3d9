#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pulsedet/rng.hpp"
#include "pulsedet/svm.hpp"

using namespace pulsedet;

namespace {

TrainingSet make_set(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  TrainingSet set;
  for (std::size_t i = 0; i < xs.size(); ++i) set.append(xs[i], ys[i]);
  return set;
}

SvmOptions with_c(double c) {
  SvmOptions o;
  o.c_param = c;
  return o;
}

/// Two Gaussian clouds in `dim` dimensions separated along every axis by `gap`.
TrainingSet clouds(std::size_t n_per_class, std::size_t dim, double gap, std::uint64_t seed) {
  TrainingSet set;
  StreamRng rng(seed, 0);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int y = i < n_per_class ? 1 : -1;
    for (double& v : x) v = rng.gaussian() + 0.5 * gap * y;
    set.append(x, y);
  }
  return set;
}

}  // namespace

TEST(Svm, SymmetricTwoPointMaxMargin) {
  const auto set = make_set({{1.0}, {-1.0}}, {1, -1});
  const auto model = train_linear_svm(set, with_c(1e6));
  ASSERT_EQ(model.weights.size(), 1u);
  EXPECT_NEAR(model.weights[0], 1.0, 1e-6);
  EXPECT_NEAR(model.bias, 0.0, 1e-6);
}

TEST(Svm, SeparableDataHasUnitMargins) {
  // Separable: every point is at least 0.5 from the hyperplane x0 + x1 = 0.
  TrainingSet set;
  StreamRng rng(5, 1);
  while (set.size() < 60) {
    const double a = 4.0 * rng.uniform() - 2.0;
    const double b = 4.0 * rng.uniform() - 2.0;
    if (std::abs(a + b) < 0.5) continue;
    set.append(std::vector<double>{a, b}, a + b > 0 ? 1 : -1);
  }
  const auto model = train_linear_svm(set, with_c(1e4));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double margin = set.labels[i] * (dot(model.weights, set.row(i)) + model.bias);
    EXPECT_GE(margin, 1.0 - 1e-6) << i;
  }
}

TEST(Svm, NonSeparableOneDimMatchesGridSearch) {
  const auto set = make_set({{1.0}, {-1.0}, {1.0}}, {1, -1, -1});
  const auto model = train_linear_svm(set, with_c(1.0));
  const auto best = oracle::grid_minimize(
      [&](const std::vector<double>& p) { return primal_objective(set, std::vector<double>{p[0]}, p[1], 1.0); },
      2, 4.0, 201, 6);
  const double oracle_value = primal_objective(set, std::vector<double>{best[0]}, best[1], 1.0);
  const double value = primal_objective(set, model.weights, model.bias, 1.0);
  EXPECT_NEAR(value, oracle_value, 1e-3);
  // The solver certifies a relative duality gap of options.tolerance.
  EXPECT_LE(value, oracle_value + 1e-6 * std::max(1.0, oracle_value));
}

TEST(Svm, TwoDimMatchesGridSearch) {
  const auto set = make_set({{1.0, 2.0}, {2.0, 0.5}, {0.2, 1.0}, {-1.0, -1.0}, {-0.5, 0.8}, {0.5, -1.5}, {1.5, 1.5}},
                            {1, 1, -1, -1, 1, -1, -1});
  const double c = 0.7;
  const auto model = train_linear_svm(set, with_c(c));
  const auto best = oracle::grid_minimize(
      [&](const std::vector<double>& p) {
        return primal_objective(set, std::vector<double>{p[0], p[1]}, p[2], c);
      },
      3, 4.0, 61, 8);
  const double oracle_value = primal_objective(set, std::vector<double>{best[0], best[1]}, best[2], c);
  const double value = primal_objective(set, model.weights, model.bias, c);
  EXPECT_NEAR(value, oracle_value, 1e-3);
  // The solver certifies a relative duality gap of options.tolerance.
  EXPECT_LE(value, oracle_value + 1e-6 * std::max(1.0, oracle_value));
}

TEST(Svm, ReportedObjectiveIsPrimalValue) {
  const auto set = clouds(100, 5, 1.0, 3);
  const auto model = train_linear_svm(set);
  EXPECT_NEAR(model.summary.primal_objective, primal_objective(set, model.weights, model.bias, 1.0), 1e-9);
  EXPECT_LE(model.summary.primal_objective - model.summary.dual_objective,
            1e-6 * std::max(1.0, model.summary.primal_objective));
}

TEST(Svm, CoordinatePerturbationsDoNotImprove) {
  const auto set = clouds(150, 8, 0.8, 4);
  SvmOptions options;
  const auto model = train_linear_svm(set, options);
  const double base = primal_objective(set, model.weights, model.bias, options.c_param);
  const double step = options.tolerance * 10.0;
  const double slack = options.tolerance * std::max(1.0, base);
  StreamRng rng(9, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t coord = rng.below(model.weights.size() + 1);
    for (double sign : {-1.0, 1.0}) {
      auto w = model.weights;
      double b = model.bias;
      if (coord == w.size()) {
        b += sign * step;
      } else {
        w[coord] += sign * step;
      }
      EXPECT_GE(primal_objective(set, w, b, options.c_param), base - slack);
    }
  }
}

TEST(Svm, WarmStartReachesSameOptimum) {
  const auto set = clouds(80, 4, 1.0, 6);
  SvmOptions cold;
  const auto a = train_linear_svm(set, cold);

  // Random feasible start: balanced mass on each class.
  StreamRng rng(77, 0);
  std::vector<double> alpha(set.size());
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    alpha[i] = rng.uniform();
    (set.labels[i] > 0 ? pos : neg) += alpha[i];
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] > 0 && pos > neg) alpha[i] *= neg / pos;
    if (set.labels[i] < 0 && neg > pos) alpha[i] *= pos / neg;
  }
  SvmOptions warm;
  warm.initial_alpha = alpha;
  const auto b = train_linear_svm(set, warm);
  EXPECT_NEAR(a.summary.primal_objective, b.summary.primal_objective,
              2e-6 * std::max(1.0, a.summary.primal_objective));
  // The primal optimum (w) is unique; b can differ inside a flat plateau.
  for (std::size_t k = 0; k < a.weights.size(); ++k) EXPECT_NEAR(a.weights[k], b.weights[k], 1e-2);
}

TEST(Svm, DecisionsInvariantUnderFeatureScaling) {
  const auto train = clouds(120, 6, 1.2, 7);
  const auto test = clouds(200, 6, 1.2, 8);
  const double scale = 3.0;
  TrainingSet scaled_train = train;
  for (double& v : scaled_train.features) v *= scale;
  SvmOptions options;
  options.c_param = 10.0;
  const auto base = train_linear_svm(train, options);
  SvmOptions scaled_options = options;
  // Hinge SVM at C / a^2 on a.x has the same boundary as C on x.
  scaled_options.c_param = options.c_param / (scale * scale);
  const auto scaled = train_linear_svm(scaled_train, scaled_options);
  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<double> x(test.row(i).begin(), test.row(i).end());
    const double s1 = dot(base.weights, x) + base.bias;
    for (double& v : x) v *= scale;
    const double s2 = dot(scaled.weights, x) + scaled.bias;
    if ((s1 > 0) != (s2 > 0)) ++disagreements;
  }
  EXPECT_EQ(disagreements, 0u);
}

TEST(Svm, Errors) {
  EXPECT_THROW(train_linear_svm(make_set({{1.0}, {2.0}}, {1, 1})), ConfigError);
  TrainingSet bad = make_set({{1.0}, {-1.0}}, {1, -1});
  bad.features[0] = std::nan("");
  EXPECT_THROW(train_linear_svm(bad), ConfigError);
  SvmOptions capped;
  capped.max_iterations = 1;
  capped.tolerance = 1e-15;
  const auto set = clouds(100, 5, 0.3, 11);
  try {
    train_linear_svm(set, capped);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_FALSE(e.trace().empty());
  }
}

TEST(Svm, Deterministic) {
  const auto set = clouds(100, 5, 1.0, 12);
  const auto a = train_linear_svm(set);
  const auto b = train_linear_svm(set);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}
