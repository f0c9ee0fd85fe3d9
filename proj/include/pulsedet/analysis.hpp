#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "detector.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "search.hpp"
#include "signalgen.hpp"
#include "stats.hpp"
#include "svm.hpp"
#include "wavelet.hpp"

namespace pulsedet {

inline constexpr std::size_t kMinReportedTrials = 100;

struct MonteCarloConfig {
  std::size_t n_trials = 5000;
  double snr_db = -15.0;
  std::uint64_t seed = 0;
  double target_pfa = 1e-3;

  void validate() const {
    detail::require(n_trials >= kMinReportedTrials, "monte carlo: n_trials must be >= 100");
    detail::require(target_pfa > 0.0 && target_pfa < 1.0, "monte carlo: target_pfa must be in (0, 1)");
  }
};

struct EvalReport {
  std::string name;
  int shift = 0;
  double snr_db = 0.0;
  double target_pfa = 0.0;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  RateEstimate pd;
  RateEstimate pfa;
};

// ---------------------------------------------------------------------------
// Single-detector rates

inline RateEstimate estimate_pfa(const CalibratedDetector& det, const PulseSetup& setup,
                                 std::size_t n_trials, std::uint64_t seed, unsigned workers = 1) {
  const std::size_t required = min_calibration_size(det.target_pfa);
  if (n_trials < required) {
    throw ConfigError("estimate_pfa: n_trials " + std::to_string(n_trials) + " is below the " +
                      std::to_string(required) + " needed to resolve target_pfa");
  }
  const auto scores = noise_scores(det.model, setup, n_trials, seed, StreamPurpose::eval_noise,
                                   static_cast<std::uint64_t>(det.shift()), workers);
  const auto fired = static_cast<std::size_t>(
      std::count_if(scores.begin(), scores.end(), [&](double s) { return s > det.threshold; }));
  return wilson_interval(fired, n_trials);
}

/// Fraction of shift-matched windows carrying `pulse` (already scaled) that fire.
inline RateEstimate estimate_pd_for_pulse(const CalibratedDetector& det, const PulseSetup& setup,
                                          std::span<const double> pulse, int shift,
                                          std::size_t n_trials, std::uint64_t seed,
                                          unsigned workers = 1) {
  detail::require(n_trials >= kMinReportedTrials, "estimate_pd: n_trials must be >= 100");
  detail::require(shift >= 0, "estimate_pd: shift must be >= 0");
  const NoiseSpec noise = setup.noise_with_seed(seed);
  std::vector<char> fired(n_trials, 0);
  parallel_for(n_trials, workers, [&](std::size_t i) {
    const auto frame = make_training_window(
        static_cast<std::size_t>(shift), pulse, noise,
        stream_key(StreamPurpose::eval_pulse, i, static_cast<std::uint64_t>(shift)), setup.layout);
    fired[i] = classify(det, extract_features(frame.samples, setup.wavelet)) > 0 ? 1 : 0;
  });
  return wilson_interval(static_cast<std::size_t>(std::count(fired.begin(), fired.end(), 1)), n_trials);
}

inline RateEstimate estimate_pd(const CalibratedDetector& det, const PulseSetup& setup, int shift,
                                double snr_db, std::size_t n_trials, std::uint64_t seed,
                                unsigned workers = 1) {
  const auto pulse = setup.pulse(snr_db);
  return estimate_pd_for_pulse(det, setup, pulse, shift, n_trials, seed, workers);
}

inline EvalReport evaluate_detector(const CalibratedDetector& det, const PulseSetup& setup,
                                    const MonteCarloConfig& mc, std::size_t n_pfa_trials,
                                    unsigned workers = 1) {
  mc.validate();
  EvalReport report;
  report.name = "shift_" + std::to_string(det.shift());
  report.shift = det.shift();
  report.snr_db = mc.snr_db;
  report.target_pfa = det.target_pfa;
  report.threshold = det.threshold;
  report.seed = mc.seed;
  report.pd = estimate_pd(det, setup, det.shift(), mc.snr_db, mc.n_trials, mc.seed, workers);
  report.pfa = estimate_pfa(det, setup, n_pfa_trials, mc.seed, workers);
  return report;
}

// ---------------------------------------------------------------------------
// Aligned multi-detector scenarios

enum class Condition { pulse, noise };

inline const char* to_string(Condition c) noexcept { return c == Condition::pulse ? "pulse" : "noise"; }

/// Per-observation score vectors (row-major, one column per detector). Each
/// observation is one noise record of S + max_shift samples, optionally with
/// the pulse embedded; detector k scores the window placed so that it holds
/// k noise samples ahead of the pulse (or behind it, for trailing layout).
inline std::vector<double> aligned_scores(const DetectorBank& bank, const PulseSetup& setup,
                                          std::span<const double> pulse, std::size_t n_obs,
                                          std::uint64_t seed, StreamPurpose purpose,
                                          unsigned workers = 1) {
  bank.validate();
  const std::size_t m = bank.size();
  const std::size_t s = bank.window_len;
  const auto shifts = bank.shifts();
  const auto max_shift = static_cast<std::size_t>(shifts.back());
  const std::size_t record_len = s + max_shift;
  const std::int64_t onset =
      setup.layout == NoiseLayout::leading ? static_cast<std::int64_t>(max_shift) : 0;
  detail::require(pulse.empty() || pulse.size() == s, "aligned_scores: pulse length must equal window length");
  const NoiseSpec noise = setup.noise_with_seed(seed);

  std::vector<double> rows(n_obs * m);
  parallel_for(n_obs, workers, [&](std::size_t i) {
    std::vector<double> record = generate_noise(record_len, noise, stream_key(purpose, i));
    for (std::size_t t = 0; t < pulse.size(); ++t) record[static_cast<std::size_t>(onset) + t] += pulse[t];
    for (std::size_t j = 0; j < m; ++j) {
      const auto start = static_cast<std::size_t>(window_for_onset(onset, shifts[j], setup.layout));
      const auto window = std::span<const double>(record).subspan(start, s);
      rows[i * m + j] = score(bank.detectors[j].model, extract_features(window, bank.wavelet));
    }
  });
  return rows;
}

struct CovarianceReport {
  SquareMatrix matrix;
  SquareMatrix standard_errors;
  std::size_t n_obs = 0;
  Condition condition = Condition::noise;
  std::vector<int> shifts;
  std::optional<double> snr_db;
};

inline constexpr std::size_t kBootstrapResamples = 1000;

inline CovarianceReport score_covariance(const DetectorBank& bank, const PulseSetup& setup,
                                         Condition condition, double snr_db, std::size_t n_obs,
                                         std::uint64_t seed, unsigned workers = 1,
                                         std::size_t bootstrap_resamples = kBootstrapResamples) {
  detail::require(bank.size() >= 2, "score_covariance: bank needs at least two detectors");
  detail::require(n_obs >= 30, "score_covariance: n_obs must be >= 30");
  std::vector<double> pulse;
  if (condition == Condition::pulse) pulse = setup.pulse(snr_db);
  const auto purpose =
      condition == Condition::pulse ? StreamPurpose::covariance_pulse : StreamPurpose::covariance_noise;
  const auto rows = aligned_scores(bank, setup, pulse, n_obs, seed, purpose, workers);
  CovarianceReport report;
  report.matrix = sample_covariance(rows, bank.size());
  if (bootstrap_resamples > 0) {
    report.standard_errors = bootstrap_covariance_se(rows, bank.size(), bootstrap_resamples,
                                                     seed ^ static_cast<std::uint64_t>(purpose));
  }
  report.n_obs = n_obs;
  report.condition = condition;
  report.shifts = bank.shifts();
  if (condition == Condition::pulse) report.snr_db = snr_db;
  return report;
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
  double threshold = 0.0;
  RateEstimate pfa;
  RateEstimate pd;
};

/// (Pfa, Pd) at each threshold from one shared set of noise and pulse scores.
inline std::vector<RocPoint> roc_sweep(const LinearModel& model, const PulseSetup& setup, int shift,
                                       double snr_db, std::size_t n_trials,
                                       std::span<const double> thresholds, std::uint64_t seed,
                                       unsigned workers = 1) {
  detail::require(!thresholds.empty(), "roc_sweep: no thresholds");
  detail::require(std::is_sorted(thresholds.begin(), thresholds.end()),
                  "roc_sweep: thresholds must be sorted ascending");
  detail::require(n_trials >= 1, "roc_sweep: n_trials must be >= 1");
  const auto pulse = setup.pulse(snr_db);
  const NoiseSpec noise = setup.noise_with_seed(seed);
  const auto channel = static_cast<std::uint64_t>(shift);
  const auto null_scores =
      noise_scores(model, setup, n_trials, seed, StreamPurpose::roc_noise, channel, workers);
  std::vector<double> alt_scores(n_trials);
  parallel_for(n_trials, workers, [&](std::size_t i) {
    const auto frame =
        make_training_window(static_cast<std::size_t>(shift), pulse, noise,
                             stream_key(StreamPurpose::roc_pulse, i, channel), setup.layout);
    alt_scores[i] = score(model, extract_features(frame.samples, setup.wavelet));
  });
  auto sorted_null = null_scores;
  auto sorted_alt = alt_scores;
  std::sort(sorted_null.begin(), sorted_null.end());
  std::sort(sorted_alt.begin(), sorted_alt.end());
  auto above = [](const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
  };
  std::vector<RocPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    out.push_back({t, wilson_interval(above(sorted_null, t), n_trials),
                   wilson_interval(above(sorted_alt, t), n_trials)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Second-stage combiner over the bank's smooth scores

struct CombinerModel {
  std::vector<double> weights;
  double bias = 0.0;
  double threshold = 0.0;
  double target_pfa = 1e-3;
  std::size_t calibration_n = 0;
  std::vector<int> shifts;

  double score(std::span<const double> bank_scores) const {
    detail::require(bank_scores.size() == weights.size(), "combiner: score vector has wrong length");
    return dot(weights, bank_scores) + bias;
  }
};

struct CombinerOptions {
  std::size_t n_pos = 1000;
  std::size_t n_neg = 1000;
  /// Fresh noise observations for the threshold; 0 selects 10 / target_pfa.
  std::size_t n_calibration = 0;
  SvmOptions svm;
};

/// Fits the combiner on row-major score vectors (m columns) and calibrates
/// its threshold on `calibration` rows.
inline CombinerModel fit_combiner(std::span<const double> positive, std::span<const double> negative,
                                  std::span<const double> calibration, std::size_t m,
                                  double target_pfa, const SvmOptions& svm = {}) {
  detail::require(m >= 1, "fit_combiner: no score columns");
  detail::require(positive.size() % m == 0 && negative.size() % m == 0 && calibration.size() % m == 0,
                  "fit_combiner: score arrays are not a multiple of the column count");
  const std::size_t n_pos = positive.size() / m;
  const std::size_t n_neg = negative.size() / m;
  const std::size_t n_cal = calibration.size() / m;
  detail::require(n_pos >= 1 && n_neg >= 1, "fit_combiner: need both classes");
  detail::require(n_cal >= min_calibration_size(target_pfa),
                  "fit_combiner: calibration set is too small for target_pfa");
  TrainingSet data;
  data.n_features = m;
  for (std::size_t i = 0; i < n_pos; ++i) data.append(positive.subspan(i * m, m), 1);
  for (std::size_t i = 0; i < n_neg; ++i) data.append(negative.subspan(i * m, m), -1);
  const LinearModel fit = train_linear_svm(data, svm);

  CombinerModel combiner;
  combiner.weights = fit.weights;
  combiner.bias = fit.bias;
  combiner.target_pfa = target_pfa;
  std::vector<double> cal_scores(n_cal);
  for (std::size_t i = 0; i < n_cal; ++i) cal_scores[i] = combiner.score(calibration.subspan(i * m, m));
  combiner.threshold = threshold_for_rate(cal_scores, target_pfa);
  combiner.calibration_n = n_cal;
  return combiner;
}

inline CombinerModel train_combiner(const DetectorBank& bank, const PulseSetup& setup, double snr_db,
                                    double target_pfa, std::uint64_t seed,
                                    const CombinerOptions& options = {}, unsigned workers = 1) {
  bank.validate();
  detail::require(options.n_pos >= 1 && options.n_neg >= 1, "train_combiner: need both classes");
  const auto pulse = setup.pulse(snr_db);
  const auto pos = aligned_scores(bank, setup, pulse, options.n_pos, seed,
                                  StreamPurpose::combiner_positive, workers);
  const auto neg = aligned_scores(bank, setup, {}, options.n_neg, seed,
                                  StreamPurpose::combiner_negative, workers);
  const std::size_t n_cal =
      options.n_calibration > 0 ? options.n_calibration : min_calibration_size(target_pfa);
  const auto cal = aligned_scores(bank, setup, {}, n_cal, seed, StreamPurpose::combiner_calibration,
                                  workers);
  CombinerModel combiner = fit_combiner(pos, neg, cal, bank.size(), target_pfa, options.svm);
  combiner.shifts = bank.shifts();
  return combiner;
}

/// Detection rates of each bank member and of the combiner on one shared set
/// of aligned pulse observations, plus the combiner's false-alarm rate.
struct FusionReport {
  std::vector<int> shifts;
  std::vector<RateEstimate> detector_pd;
  RateEstimate combiner_pd;
  RateEstimate combiner_pfa;
};

inline FusionReport evaluate_fusion(const CombinerModel& combiner, const DetectorBank& bank,
                                    const PulseSetup& setup, double snr_db, std::size_t n_pd,
                                    std::size_t n_pfa, std::uint64_t seed, unsigned workers = 1) {
  detail::require(n_pd >= kMinReportedTrials, "evaluate_fusion: n_pd must be >= 100");
  detail::require(n_pfa >= min_calibration_size(combiner.target_pfa),
                  "evaluate_fusion: n_pfa is too small for the combiner's target_pfa");
  const std::size_t m = bank.size();
  const auto pulse = setup.pulse(snr_db);
  const auto alt = aligned_scores(bank, setup, pulse, n_pd, seed, StreamPurpose::combiner_eval_pulse,
                                  workers);
  const auto null = aligned_scores(bank, setup, {}, n_pfa, seed, StreamPurpose::combiner_eval_noise,
                                   workers);
  FusionReport report;
  report.shifts = bank.shifts();
  std::vector<std::size_t> hits(m, 0);
  std::size_t fused_hits = 0;
  for (std::size_t i = 0; i < n_pd; ++i) {
    const std::span<const double> row(alt.data() + i * m, m);
    for (std::size_t j = 0; j < m; ++j) {
      if (row[j] > bank.detectors[j].threshold) ++hits[j];
    }
    if (combiner.score(row) > combiner.threshold) ++fused_hits;
  }
  for (std::size_t j = 0; j < m; ++j) report.detector_pd.push_back(wilson_interval(hits[j], n_pd));
  report.combiner_pd = wilson_interval(fused_hits, n_pd);
  std::size_t false_alarms = 0;
  for (std::size_t i = 0; i < n_pfa; ++i) {
    if (combiner.score({null.data() + i * m, m}) > combiner.threshold) ++false_alarms;
  }
  report.combiner_pfa = wilson_interval(false_alarms, n_pfa);
  return report;
}

// ---------------------------------------------------------------------------
// Localization of one detector around a known onset

struct LocalizationReport {
  std::size_t n_trials = 0;
  std::size_t margin = 0;
  std::size_t tolerance = 0;
  /// Trials whose firing windows all lie within +/- tolerance of the onset window.
  std::size_t contained = 0;
  /// Trials where the detector fired at least once within tolerance.
  std::size_t detected = 0;
  /// Trials with no firing window at all.
  std::size_t silent = 0;
  /// farthest_histogram[d] = trials whose farthest firing window is d windows from the onset.
  std::vector<std::size_t> farthest_histogram;

  RateEstimate containment() const { return wilson_interval(contained, n_trials); }
};

/// Each trial embeds the pulse at sample `margin` of a frame of S + 2*margin
/// samples and runs the detector over all 2*margin + 1 windows.
inline LocalizationReport localization_study(const CalibratedDetector& det, const PulseSetup& setup,
                                             double snr_db, std::size_t n_trials, std::size_t margin,
                                             std::size_t tolerance, std::uint64_t seed,
                                             unsigned workers = 1) {
  detail::require(n_trials >= 1, "localization: n_trials must be >= 1");
  DetectorBank bank{{det}, setup.wavelet, setup.window_len()};
  const auto pulse = setup.pulse(snr_db);
  const NoiseSpec noise = setup.noise_with_seed(seed);
  const std::size_t stream_len = setup.window_len() + 2 * margin;
  const std::int64_t onset_window =
      window_for_onset(static_cast<std::int64_t>(margin), det.shift(), setup.layout);

  std::vector<std::int64_t> farthest(n_trials, -1);
  std::vector<char> hit(n_trials, 0);
  parallel_for(n_trials, workers, [&](std::size_t i) {
    const auto frame = embed_pulse(stream_len, pulse, margin, noise,
                                   stream_key(StreamPurpose::localization, i));
    for (const auto& e : run_bank_fast(frame, bank)) {
      if (e.decision <= 0) continue;
      const std::int64_t offset = std::abs(static_cast<std::int64_t>(e.window_index) - onset_window);
      farthest[i] = std::max(farthest[i], offset);
      if (offset <= static_cast<std::int64_t>(tolerance)) hit[i] = 1;
    }
  });

  LocalizationReport report;
  report.n_trials = n_trials;
  report.margin = margin;
  report.tolerance = tolerance;
  for (std::size_t i = 0; i < n_trials; ++i) {
    if (hit[i]) ++report.detected;
    if (farthest[i] < 0) {
      ++report.silent;
      ++report.contained;
      continue;
    }
    const auto d = static_cast<std::size_t>(farthest[i]);
    if (report.farthest_histogram.size() <= d) report.farthest_histogram.resize(d + 1, 0);
    ++report.farthest_histogram[d];
    if (d <= tolerance) ++report.contained;
  }
  return report;
}

}  // namespace pulsedet
