#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "detector.hpp"
#include "error.hpp"
#include "signalgen.hpp"
#include "svm.hpp"
#include "wavelet.hpp"

namespace pulsedet {

struct TrialCounts {
  std::size_t train_pos = 500;
  std::size_t train_neg = 500;
  std::size_t calibration = 200000;
  std::size_t eval_pd = 5000;
  std::size_t eval_pfa = 50000;
  std::size_t covariance = 5000;
  std::size_t bootstrap = 1000;
  std::size_t roc = 5000;
  std::size_t roc_points = 41;
  std::size_t combiner_pos = 1000;
  std::size_t combiner_neg = 1000;
  std::size_t localization = 200;
};

/// Serialized form of one experiment. Every field has a default, so an
/// empty document is a valid configuration.
struct ExperimentConfig {
  ChirpSpec chirp;
  NoiseSpec noise;
  DecompositionConfig wavelet;
  NoiseLayout layout = NoiseLayout::leading;
  std::vector<int> shifts{0, 11, 23};
  double snr_db = -15.0;
  double target_pfa = 1e-3;
  TrialCounts trials;
  double svm_c = 1.0;
  double svm_tolerance = 1e-6;
  std::size_t svm_max_iterations = 200;
  std::uint64_t seed = 20031124;
  std::string output_dir = "out";
  bool materialize = false;

  PulseSetup setup() const {
    PulseSetup s{chirp, noise, wavelet, layout};
    s.noise.seed = seed;
    return s;
  }

  SvmOptions svm() const {
    SvmOptions o;
    o.c_param = svm_c;
    o.tolerance = svm_tolerance;
    o.max_iterations = svm_max_iterations;
    return o;
  }

  void validate() const {
    chirp.validate();
    noise.validate();
    detail::require(wavelet.levels >= 1, "wavelet.levels must be >= 1");
    check_divisible(chirp.num_samples, wavelet.levels);
    detail::require(!shifts.empty(), "shifts must not be empty");
    for (std::size_t i = 0; i < shifts.size(); ++i) {
      detail::require(shifts[i] >= 0, "shifts[" + std::to_string(i) + "] must be >= 0");
      detail::require(static_cast<std::size_t>(shifts[i]) < chirp.num_samples,
                      "shifts[" + std::to_string(i) + "] = " + std::to_string(shifts[i]) +
                          " must be < chirp.num_samples (" + std::to_string(chirp.num_samples) + ")");
      if (i > 0) {
        detail::require(shifts[i] > shifts[i - 1], "shifts must be sorted ascending and distinct");
      }
    }
    detail::require(target_pfa > 0.0 && target_pfa < 1.0, "target_pfa must be in (0, 1)");
    detail::require(svm_c > 0.0, "svm.c must be > 0");
    detail::require(svm_tolerance > 0.0, "svm.tolerance must be > 0");
    detail::require(trials.train_pos >= 1 && trials.train_neg >= 1, "trials.train_pos/train_neg must be >= 1");
    const std::size_t min_null = min_calibration_size(target_pfa);
    detail::require(trials.calibration >= min_null,
                    "trials.calibration must be >= " + std::to_string(min_null) + " for target_pfa");
    detail::require(trials.eval_pfa >= min_null,
                    "trials.eval_pfa must be >= " + std::to_string(min_null) + " for target_pfa");
    detail::require(trials.eval_pd >= 100, "trials.eval_pd must be >= 100");
    detail::require(trials.covariance >= 30, "trials.covariance must be >= 30");
    detail::require(trials.roc >= 100, "trials.roc must be >= 100");
    detail::require(trials.roc_points >= 2, "trials.roc_points must be >= 2");
  }
};

inline const char* to_string(NoiseLayout layout) noexcept {
  return layout == NoiseLayout::leading ? "leading" : "trailing";
}

inline NoiseLayout parse_layout(const std::string& text) {
  if (text == "leading") return NoiseLayout::leading;
  if (text == "trailing") return NoiseLayout::trailing;
  throw ConfigError("layout must be \"leading\" or \"trailing\", got \"" + text + "\"");
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["chirp"] = {{"num_samples", c.chirp.num_samples},
                {"start_freq", c.chirp.start_freq},
                {"end_freq", c.chirp.end_freq},
                {"amplitude", c.chirp.amplitude}};
  j["noise"] = {{"mean", c.noise.mean}, {"std_dev", c.noise.std_dev}};
  j["wavelet"] = {{"family", "db5"}, {"levels", c.wavelet.levels}, {"boundary", "periodic"}};
  j["layout"] = to_string(c.layout);
  j["shifts"] = c.shifts;
  j["snr_db"] = c.snr_db;
  j["target_pfa"] = c.target_pfa;
  j["trials"] = {{"train_pos", c.trials.train_pos},       {"train_neg", c.trials.train_neg},
                 {"calibration", c.trials.calibration},   {"eval_pd", c.trials.eval_pd},
                 {"eval_pfa", c.trials.eval_pfa},         {"covariance", c.trials.covariance},
                 {"bootstrap", c.trials.bootstrap},       {"roc", c.trials.roc},
                 {"roc_points", c.trials.roc_points},     {"combiner_pos", c.trials.combiner_pos},
                 {"combiner_neg", c.trials.combiner_neg}, {"localization", c.trials.localization}};
  j["svm"] = {{"c", c.svm_c}, {"tolerance", c.svm_tolerance}, {"max_iterations", c.svm_max_iterations}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["materialize"] = c.materialize;
  return j;
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, const std::string& path, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field " + path + key + " has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                           const std::string& path) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown config field " + path + item.key());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  detail::reject_unknown(j, {"chirp", "noise", "wavelet", "layout", "shifts", "snr_db", "target_pfa",
                             "trials", "svm", "seed", "output_dir", "materialize"},
                         "");
  ExperimentConfig c;
  if (j.contains("chirp")) {
    const auto& o = j.at("chirp");
    detail::reject_unknown(o, {"num_samples", "start_freq", "end_freq", "amplitude"}, "chirp.");
    read_field(o, "num_samples", "chirp.", c.chirp.num_samples);
    read_field(o, "start_freq", "chirp.", c.chirp.start_freq);
    read_field(o, "end_freq", "chirp.", c.chirp.end_freq);
    read_field(o, "amplitude", "chirp.", c.chirp.amplitude);
  }
  if (j.contains("noise")) {
    const auto& o = j.at("noise");
    detail::reject_unknown(o, {"mean", "std_dev"}, "noise.");
    read_field(o, "mean", "noise.", c.noise.mean);
    read_field(o, "std_dev", "noise.", c.noise.std_dev);
  }
  if (j.contains("wavelet")) {
    const auto& o = j.at("wavelet");
    detail::reject_unknown(o, {"family", "levels", "boundary"}, "wavelet.");
    std::string family = "db5";
    std::string boundary = "periodic";
    read_field(o, "family", "wavelet.", family);
    read_field(o, "boundary", "wavelet.", boundary);
    read_field(o, "levels", "wavelet.", c.wavelet.levels);
    if (family != "db5") throw ConfigError("wavelet.family: only \"db5\" is supported");
    if (boundary != "periodic") throw ConfigError("wavelet.boundary: only \"periodic\" is supported");
  }
  if (j.contains("layout")) {
    std::string layout;
    read_field(j, "layout", "", layout);
    c.layout = parse_layout(layout);
  }
  read_field(j, "shifts", "", c.shifts);
  read_field(j, "snr_db", "", c.snr_db);
  read_field(j, "target_pfa", "", c.target_pfa);
  if (j.contains("trials")) {
    const auto& o = j.at("trials");
    detail::reject_unknown(o, {"train_pos", "train_neg", "calibration", "eval_pd", "eval_pfa",
                               "covariance", "bootstrap", "roc", "roc_points", "combiner_pos",
                               "combiner_neg", "localization"},
                           "trials.");
    read_field(o, "train_pos", "trials.", c.trials.train_pos);
    read_field(o, "train_neg", "trials.", c.trials.train_neg);
    read_field(o, "calibration", "trials.", c.trials.calibration);
    read_field(o, "eval_pd", "trials.", c.trials.eval_pd);
    read_field(o, "eval_pfa", "trials.", c.trials.eval_pfa);
    read_field(o, "covariance", "trials.", c.trials.covariance);
    read_field(o, "bootstrap", "trials.", c.trials.bootstrap);
    read_field(o, "roc", "trials.", c.trials.roc);
    read_field(o, "roc_points", "trials.", c.trials.roc_points);
    read_field(o, "combiner_pos", "trials.", c.trials.combiner_pos);
    read_field(o, "combiner_neg", "trials.", c.trials.combiner_neg);
    read_field(o, "localization", "trials.", c.trials.localization);
  }
  if (j.contains("svm")) {
    const auto& o = j.at("svm");
    detail::reject_unknown(o, {"c", "tolerance", "max_iterations"}, "svm.");
    read_field(o, "c", "svm.", c.svm_c);
    read_field(o, "tolerance", "svm.", c.svm_tolerance);
    read_field(o, "max_iterations", "svm.", c.svm_max_iterations);
  }
  read_field(j, "seed", "", c.seed);
  read_field(j, "output_dir", "", c.output_dir);
  read_field(j, "materialize", "", c.materialize);
  c.validate();
  return c;
}

/// Parses a config document; `//` and `/* */` comments are allowed.
inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace pulsedet
