#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "config.hpp"
#include "detector.hpp"
#include "error.hpp"
#include "search.hpp"
#include "signalgen.hpp"
#include "version.hpp"

namespace pulsedet {

// CSV conventions: comma separators, '.' decimal point, a header row, and
// numbers printed with 17 significant digits so values round-trip.

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// First line of every report file. It is the only line that varies between
/// otherwise identical runs.
inline constexpr const char* kTimestampPrefix = "# generated_at=";

inline void write_timestamp_line(std::ostream& os, const std::string& timestamp) {
  os << kTimestampPrefix << timestamp << '\n';
}

inline void write_rate_columns(std::ostream& os, const RateEstimate& r) {
  os << r.successes << ',' << r.trials << ',' << fmt_num(r.rate) << ',' << fmt_num(r.ci_low) << ','
     << fmt_num(r.ci_high);
}

// ---------------------------------------------------------------------------
// Models

struct ModelProvenance {
  std::uint64_t seed = 0;
  double snr_db = 0.0;
  std::size_t train_pos = 0;
  std::size_t train_neg = 0;
};

inline nlohmann::ordered_json model_to_json(const LinearModel& model, const DecompositionConfig& wavelet,
                                            const ModelProvenance& prov,
                                            const CalibratedDetector* calibrated = nullptr) {
  nlohmann::ordered_json j;
  j["format"] = "pulsedet-model";
  j["tool_version"] = kVersion;
  j["shift"] = model.shift;
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["c_param"] = model.c_param;
  j["wavelet"] = {{"family", "db5"}, {"levels", wavelet.levels}, {"boundary", "periodic"}};
  j["training"] = {{"seed", prov.seed},
                   {"snr_db", prov.snr_db},
                   {"n_pos", prov.train_pos},
                   {"n_neg", prov.train_neg},
                   {"iterations", model.summary.iterations},
                   {"primal_objective", model.summary.primal_objective},
                   {"dual_objective", model.summary.dual_objective},
                   {"support_vectors", model.summary.support_vectors}};
  if (calibrated != nullptr) {
    j["calibration"] = {{"threshold", calibrated->threshold},
                        {"target_pfa", calibrated->target_pfa},
                        {"calibration_n", calibrated->calibration_n}};
  }
  return j;
}

struct LoadedModel {
  LinearModel model;
  DecompositionConfig wavelet;
  ModelProvenance provenance;
  std::optional<CalibratedDetector> calibrated;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "pulsedet-model") {
      throw ConfigError("model file has an unexpected format tag");
    }
    LoadedModel out;
    out.model.shift = j.at("shift").get<int>();
    out.model.weights = j.at("weights").get<std::vector<double>>();
    out.model.bias = j.at("bias").get<double>();
    out.model.c_param = j.at("c_param").get<double>();
    out.wavelet.levels = j.at("wavelet").at("levels").get<int>();
    const auto& t = j.at("training");
    out.provenance = {t.at("seed").get<std::uint64_t>(), t.at("snr_db").get<double>(),
                      t.at("n_pos").get<std::size_t>(), t.at("n_neg").get<std::size_t>()};
    out.model.summary = {t.at("iterations").get<std::size_t>(), t.at("primal_objective").get<double>(),
                         t.at("dual_objective").get<double>(), t.at("support_vectors").get<std::size_t>()};
    if (j.contains("calibration")) {
      const auto& c = j.at("calibration");
      out.calibrated = CalibratedDetector{out.model, c.at("threshold").get<double>(),
                                          c.at("target_pfa").get<double>(),
                                          c.at("calibration_n").get<std::size_t>()};
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

inline nlohmann::ordered_json combiner_to_json(const CombinerModel& c) {
  nlohmann::ordered_json j;
  j["format"] = "pulsedet-combiner";
  j["tool_version"] = kVersion;
  j["shifts"] = c.shifts;
  j["weights"] = c.weights;
  j["bias"] = c.bias;
  j["threshold"] = c.threshold;
  j["target_pfa"] = c.target_pfa;
  j["calibration_n"] = c.calibration_n;
  return j;
}

// ---------------------------------------------------------------------------
// Frames: single column with truth metadata in a comment line

inline void write_frame_csv(std::ostream& os, const SignalFrame& frame) {
  if (frame.truth) {
    os << "# onset_index=" << frame.truth->onset_index << ",pulse_len=" << frame.truth->pulse_len
       << ",snr_db=" << fmt_num(frame.truth->snr_db) << '\n';
  }
  os << "sample\n";
  for (double v : frame.samples) os << fmt_num(v) << '\n';
}

inline SignalFrame read_frame_csv(std::istream& is) {
  SignalFrame frame;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      PulseTruth truth;
      if (std::sscanf(line.c_str(), "# onset_index=%zu,pulse_len=%zu,snr_db=%lf", &truth.onset_index,
                      &truth.pulse_len, &truth.snr_db) == 3) {
        frame.truth = truth;
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (line == "sample") continue;
    }
    try {
      std::size_t used = 0;
      frame.samples.push_back(std::stod(line, &used));
      if (used != line.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("stream file line " + std::to_string(line_no) + " is not a number: " + line);
    }
  }
  if (frame.truth && frame.truth->onset_index + frame.truth->pulse_len > frame.samples.size()) {
    throw ConfigError("stream file truth metadata exceeds the stream length");
  }
  return frame;
}

inline void write_features_csv(std::ostream& os, const TrainingSet& set) {
  os << "label";
  for (std::size_t k = 0; k < set.n_features; ++k) os << ",d" << k;
  os << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    os << set.labels[i];
    for (double v : set.row(i)) os << ',' << fmt_num(v);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Search output

inline void write_events_csv(std::ostream& os, std::span<const DetectionEvent> events) {
  os << "window_index,shift,smooth_score,decision\n";
  for (const auto& e : events) {
    os << e.window_index << ',' << e.shift << ',' << fmt_num(e.smooth_score) << ',' << e.decision << '\n';
  }
}

inline void write_aggregations_csv(std::ostream& os, std::span<const AggregatedDetection> aggs,
                                   const std::vector<int>& shifts) {
  os << "onset,votes";
  for (int s : shifts) os << ",score_" << s;
  os << '\n';
  for (const auto& a : aggs) {
    os << a.hypothesized_onset << ',' << a.votes;
    for (int s : shifts) {
      os << ',';
      if (auto it = a.per_shift_scores.find(s); it != a.per_shift_scores.end()) os << fmt_num(it->second);
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Reports

inline void write_eval_csv(std::ostream& os, std::span<const EvalReport> reports) {
  os << "detector,shift,snr_db,target_pfa,threshold,seed,"
        "pd_hits,pd_trials,pd,pd_ci_low,pd_ci_high,"
        "pfa_hits,pfa_trials,pfa,pfa_ci_low,pfa_ci_high\n";
  for (const auto& r : reports) {
    os << r.name << ',' << r.shift << ',' << fmt_num(r.snr_db) << ',' << fmt_num(r.target_pfa) << ','
       << fmt_num(r.threshold) << ',' << r.seed << ',';
    write_rate_columns(os, r.pd);
    os << ',';
    write_rate_columns(os, r.pfa);
    os << '\n';
  }
}

/// One block per report: a tag comment, a header row, then the matrix rows
/// (and, when present, a second block with bootstrap standard errors).
inline void write_covariance_csv(std::ostream& os, const CovarianceReport& r) {
  auto tag = [&](const char* kind) {
    os << "# " << kind << " condition=" << to_string(r.condition) << ",n_obs=" << r.n_obs << ",snr_db=";
    if (r.snr_db) {
      os << fmt_num(*r.snr_db);
    } else {
      os << "none";
    }
    os << '\n';
  };
  auto header = [&]() {
    os << "row";
    for (int s : r.shifts) os << ",shift_" << s;
    os << '\n';
  };
  auto rows = [&](const SquareMatrix& m) {
    for (std::size_t a = 0; a < m.dim; ++a) {
      os << "shift_" << r.shifts[a];
      for (std::size_t b = 0; b < m.dim; ++b) os << ',' << fmt_num(m(a, b));
      os << '\n';
    }
  };
  tag("covariance");
  header();
  rows(r.matrix);
  if (r.standard_errors.dim == r.matrix.dim) {
    tag("bootstrap_se");
    header();
    rows(r.standard_errors);
  }
}

inline void write_roc_csv(std::ostream& os, std::span<const RocPoint> points) {
  os << "pfa,pd,threshold,pfa_ci_low,pfa_ci_high,pd_ci_low,pd_ci_high\n";
  for (const auto& p : points) {
    os << fmt_num(p.pfa.rate) << ',' << fmt_num(p.pd.rate) << ',' << fmt_num(p.threshold) << ','
       << fmt_num(p.pfa.ci_low) << ',' << fmt_num(p.pfa.ci_high) << ',' << fmt_num(p.pd.ci_low) << ','
       << fmt_num(p.pd.ci_high) << '\n';
  }
}

}  // namespace pulsedet
