#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "pulsedet/pulsedet.hpp"

namespace fs = std::filesystem;
using namespace pulsedet;
using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kLocalizationMargin = 32;

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Digest of a file's content with the timestamp line left out.
std::string content_digest(const fs::path& path) {
  std::string text = read_file(path);
  if (text.rfind(kTimestampPrefix, 0) == 0) {
    const auto eol = text.find('\n');
    text.erase(0, eol == std::string::npos ? text.size() : eol + 1);
  }
  return sha256_hex(text);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("output_dir");
  j.erase("materialize");
  return sha256_hex(j.dump());
}

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  unsigned workers = 1;
  std::string timestamp = utc_timestamp();
  std::string hash;
  std::optional<fs::path> config_path;
};

class Manifest {
 public:
  explicit Manifest(const Context& ctx) : ctx_(ctx), path_(ctx.out / "manifest.json") {
    if (fs::exists(path_)) {
      doc_ = json::parse(read_file(path_));
      const auto recorded = doc_.value("config_hash", std::string{});
      if (recorded != ctx.hash) {
        throw ConfigError("config hash " + ctx.hash.substr(0, 12) + " does not match the manifest in " +
                          ctx.out.string() + " (" + recorded.substr(0, 12) +
                          "); the artifacts there were produced with a different configuration. "
                          "Use the original config or a fresh --out directory.");
      }
    } else {
      doc_["tool_version"] = kVersion;
      doc_["config_hash"] = ctx.hash;
      doc_["stages"] = json::object();
    }
  }

  void require_stage(const std::string& stage, const std::string& needed_by) const {
    if (!doc_["stages"].contains(stage) || doc_["stages"][stage].value("status", "") != "ok") {
      throw MissingArtifact(needed_by + " needs the '" + stage + "' stage in " + ctx_.out.string() +
                            "; run `pulsedet " + stage + "` first");
    }
    for (const auto& f : doc_["stages"][stage]["outputs"]) {
      const fs::path p = ctx_.out / f["path"].get<std::string>();
      if (!fs::exists(p)) throw MissingArtifact("missing artifact " + p.string());
    }
  }

  void record(const std::string& stage, const std::vector<fs::path>& outputs,
              const std::vector<fs::path>& inputs = {}) {
    json entry;
    entry["status"] = "ok";
    entry["completed_at"] = ctx_.timestamp;
    auto list = [&](const std::vector<fs::path>& paths, bool relative) {
      json arr = json::array();
      for (const auto& p : paths) {
        const auto shown = relative ? fs::relative(p, ctx_.out).generic_string() : p.string();
        arr.push_back({{"path", shown}, {"sha256", content_digest(p)}});
      }
      return arr;
    };
    if (!inputs.empty()) entry["inputs"] = list(inputs, false);
    entry["outputs"] = list(outputs, true);
    doc_["tool_version"] = kVersion;
    doc_["stages"][stage] = entry;
    if (ctx_.config_path) {
      doc_["config_file"] = {{"path", ctx_.config_path->string()}, {"sha256", content_digest(*ctx_.config_path)}};
    }
    std::ofstream os(path_);
    os << doc_.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + path_.string());
  }

 private:
  const Context& ctx_;
  fs::path path_;
  json doc_;
};

fs::path prepare(const fs::path& path) {
  fs::create_directories(path.parent_path());
  return path;
}

fs::path emit_text(const fs::path& path, const std::string& text) {
  std::ofstream os(prepare(path), std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
  std::cout << path.string() << '\n';
  return path;
}

fs::path emit_report(const Context& ctx, const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ostringstream os;
  write_timestamp_line(os, ctx.timestamp);
  body(os);
  return emit_text(path, os.str());
}

fs::path emit_json(const fs::path& path, const json& j) { return emit_text(path, j.dump(2) + "\n"); }

void note(const std::string& msg) { std::cerr << "[pulsedet] " << msg << '\n'; }

fs::path model_path(const Context& ctx, int shift) {
  return ctx.out / "models" / ("model_shift_" + std::to_string(shift) + ".json");
}
fs::path detector_path(const Context& ctx, int shift) {
  return ctx.out / "models" / ("detector_shift_" + std::to_string(shift) + ".json");
}

LoadedModel load_model(const fs::path& path) { return model_from_json(nlohmann::json::parse(read_file(path))); }

DetectorBank load_bank(const Context& ctx) {
  DetectorBank bank;
  bank.wavelet = ctx.cfg.wavelet;
  bank.window_len = ctx.cfg.chirp.num_samples;
  for (int shift : ctx.cfg.shifts) {
    auto loaded = load_model(detector_path(ctx, shift));
    if (!loaded.calibrated) throw MissingArtifact(detector_path(ctx, shift).string() + " is not calibrated");
    bank.detectors.push_back(*loaded.calibrated);
  }
  bank.validate();
  return bank;
}

std::string training_csv(const TrainingSet& set) {
  std::ostringstream os;
  write_features_csv(os, set);
  return os.str();
}

TrainingSet training_set_for(const Context& ctx, int shift) {
  const auto& c = ctx.cfg;
  return build_training_set(shift, c.trials.train_pos, c.trials.train_neg, c.snr_db, c.setup(), c.seed);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen(const Context& ctx) {
  Manifest manifest(ctx);
  const auto& c = ctx.cfg;
  json doc;
  doc["format"] = "pulsedet-datasets";
  doc["storage"] = c.materialize ? "materialized" : "seeds";
  doc["seed"] = c.seed;
  doc["layout"] = to_string(c.layout);
  std::vector<fs::path> outputs;
  json training = json::array();
  for (int shift : c.shifts) {
    const auto set = training_set_for(ctx, shift);
    const auto text = training_csv(set);
    json entry = {{"shift", shift},
                  {"n_pos", c.trials.train_pos},
                  {"n_neg", c.trials.train_neg},
                  {"snr_db", c.snr_db},
                  {"stream_purposes", {"training_positive", "training_negative"}},
                  {"features_sha256", sha256_hex(text)}};
    if (c.materialize) {
      const auto path = ctx.out / "datasets" / ("train_shift_" + std::to_string(shift) + ".csv");
      outputs.push_back(emit_text(path, text));
      entry["file"] = fs::relative(path, ctx.out).generic_string();
    }
    training.push_back(entry);
  }
  doc["training"] = training;
  doc["calibration"] = {{"n", c.trials.calibration}, {"stream_purpose", "calibration"}};
  doc["evaluation"] = {{"n_pd", c.trials.eval_pd},
                       {"n_pfa", c.trials.eval_pfa},
                       {"stream_purposes", {"eval_pulse", "eval_noise"}}};
  doc["covariance"] = {{"n_obs", c.trials.covariance}, {"stream_purposes", {"covariance_pulse", "covariance_noise"}}};
  outputs.push_back(emit_json(ctx.out / "datasets" / "datasets.json", doc));
  manifest.record("gen", outputs);
}

void cmd_train(const Context& ctx) {
  Manifest manifest(ctx);
  manifest.require_stage("gen", "train");
  const auto datasets = nlohmann::json::parse(read_file(ctx.out / "datasets" / "datasets.json"));
  std::vector<fs::path> outputs;
  for (int shift : ctx.cfg.shifts) {
    const auto set = training_set_for(ctx, shift);
    std::string expected;
    for (const auto& e : datasets.at("training")) {
      if (e.at("shift").get<int>() == shift) expected = e.at("features_sha256").get<std::string>();
    }
    if (expected.empty()) throw MissingArtifact("datasets.json has no training set for shift " + std::to_string(shift));
    if (sha256_hex(training_csv(set)) != expected) {
      throw NumericError("regenerated training set for shift " + std::to_string(shift) +
                         " does not match its recorded digest");
    }
    note("training shift " + std::to_string(shift));
    const auto model = train_linear_svm(set, ctx.cfg.svm());
    const ModelProvenance prov{ctx.cfg.seed, ctx.cfg.snr_db, ctx.cfg.trials.train_pos, ctx.cfg.trials.train_neg};
    outputs.push_back(emit_json(model_path(ctx, shift), model_to_json(model, ctx.cfg.wavelet, prov)));
  }
  manifest.record("train", outputs);
}

void cmd_calibrate(const Context& ctx) {
  Manifest manifest(ctx);
  manifest.require_stage("train", "calibrate");
  std::vector<fs::path> outputs;
  const auto setup = ctx.cfg.setup();
  for (int shift : ctx.cfg.shifts) {
    const auto loaded = load_model(model_path(ctx, shift));
    note("calibrating shift " + std::to_string(shift) + " on " + std::to_string(ctx.cfg.trials.calibration) +
         " noise windows");
    const auto scores = noise_scores(loaded.model, setup, ctx.cfg.trials.calibration, ctx.cfg.seed,
                                     StreamPurpose::calibration, static_cast<std::uint64_t>(shift), ctx.workers);
    const auto det = calibrate_threshold(loaded.model, scores, ctx.cfg.target_pfa);
    outputs.push_back(
        emit_json(detector_path(ctx, shift), model_to_json(loaded.model, loaded.wavelet, loaded.provenance, &det)));
  }
  manifest.record("calibrate", outputs);
}

void cmd_eval(const Context& ctx) {
  Manifest manifest(ctx);
  manifest.require_stage("calibrate", "eval");
  const auto& c = ctx.cfg;
  const auto setup = c.setup();
  const auto bank = load_bank(ctx);
  std::vector<EvalReport> reports;
  for (const auto& det : bank.detectors) {
    note("evaluating shift " + std::to_string(det.shift()));
    reports.push_back(evaluate_detector(det, setup, MonteCarloConfig{c.trials.eval_pd, c.snr_db, c.seed, c.target_pfa},
                                        c.trials.eval_pfa, ctx.workers));
  }
  std::vector<fs::path> outputs;
  outputs.push_back(emit_report(ctx, ctx.out / "reports" / "eval.csv", [&](std::ostream& os) { write_eval_csv(os, reports); }));

  note("training the score combiner");
  CombinerOptions options;
  options.n_pos = c.trials.combiner_pos;
  options.n_neg = c.trials.combiner_neg;
  options.n_calibration = c.trials.calibration;
  options.svm = c.svm();
  const auto combiner = train_combiner(bank, setup, c.snr_db, c.target_pfa, c.seed, options, ctx.workers);
  outputs.push_back(emit_json(ctx.out / "models" / "combiner.json", combiner_to_json(combiner)));
  const auto fusion = evaluate_fusion(combiner, bank, setup, c.snr_db, c.trials.eval_pd, c.trials.eval_pfa, c.seed, ctx.workers);
  outputs.push_back(emit_report(ctx, ctx.out / "reports" / "fusion.csv", [&](std::ostream& os) {
    os << "source,pd_hits,pd_trials,pd,pd_ci_low,pd_ci_high,pfa_hits,pfa_trials,pfa,pfa_ci_low,pfa_ci_high\n";
    for (std::size_t j = 0; j < fusion.shifts.size(); ++j) {
      os << "shift_" << fusion.shifts[j] << ',';
      write_rate_columns(os, fusion.detector_pd[j]);
      os << ",,,,,\n";
    }
    os << "combiner,";
    write_rate_columns(os, fusion.combiner_pd);
    os << ',';
    write_rate_columns(os, fusion.combiner_pfa);
    os << '\n';
  }));
  outputs.push_back(emit_report(ctx, ctx.out / "reports" / "summary.txt", [&](std::ostream& os) {
    os << "snr_db: " << fmt_num(c.snr_db) << "\ntarget_pfa: " << fmt_num(c.target_pfa) << "\n";
    for (const auto& r : reports) {
      os << r.name << ": pd " << fmt_num(r.pd.rate) << " [" << fmt_num(r.pd.ci_low) << ", " << fmt_num(r.pd.ci_high)
         << "], pfa " << fmt_num(r.pfa.rate) << " [" << fmt_num(r.pfa.ci_low) << ", " << fmt_num(r.pfa.ci_high) << "]\n";
    }
    os << "combiner: pd " << fmt_num(fusion.combiner_pd.rate) << " [" << fmt_num(fusion.combiner_pd.ci_low) << ", "
       << fmt_num(fusion.combiner_pd.ci_high) << "], pfa " << fmt_num(fusion.combiner_pfa.rate) << " ["
       << fmt_num(fusion.combiner_pfa.ci_low) << ", " << fmt_num(fusion.combiner_pfa.ci_high) << "]\n";
  }));
  manifest.record("eval", outputs);
}

void cmd_cov(const Context& ctx) {
  Manifest manifest(ctx);
  manifest.require_stage("calibrate", "cov");
  const auto& c = ctx.cfg;
  const auto bank = load_bank(ctx);
  std::vector<fs::path> outputs;
  for (auto cond : {Condition::pulse, Condition::noise}) {
    note(std::string("covariance, ") + to_string(cond) + " condition");
    const auto report = score_covariance(bank, c.setup(), cond, c.snr_db, c.trials.covariance, c.seed, ctx.workers,
                                         c.trials.bootstrap);
    const auto name = std::string("covariance_") + to_string(cond) + ".csv";
    outputs.push_back(emit_report(ctx, ctx.out / "reports" / name, [&](std::ostream& os) { write_covariance_csv(os, report); }));
  }
  manifest.record("cov", outputs);
}

void cmd_roc(const Context& ctx) {
  Manifest manifest(ctx);
  manifest.require_stage("train", "roc");
  const auto& c = ctx.cfg;
  std::vector<fs::path> outputs;
  for (int shift : c.shifts) {
    const auto model = load_model(model_path(ctx, shift)).model;
    const double spread = c.noise.std_dev * std::sqrt(dot(model.weights, model.weights));
    std::vector<double> thresholds(c.trials.roc_points);
    const double lo = model.bias - 4.0 * spread;
    const double hi = model.bias + 8.0 * spread;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      thresholds[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(thresholds.size() - 1);
    }
    const auto roc = roc_sweep(model, c.setup(), shift, c.snr_db, c.trials.roc, thresholds, c.seed, ctx.workers);
    outputs.push_back(emit_report(ctx, ctx.out / "reports" / ("roc_shift_" + std::to_string(shift) + ".csv"),
                                  [&](std::ostream& os) { write_roc_csv(os, roc); }));
  }
  manifest.record("roc", outputs);
}

struct StreamOptions {
  std::size_t length = 2048;
  std::size_t onset = 512;
  std::optional<double> snr_db;
  std::uint64_t index = 0;
  std::string output;
};

void cmd_make_stream(const Context& ctx, const StreamOptions& o) {
  Manifest manifest(ctx);
  const auto setup = ctx.cfg.setup();
  const double snr = o.snr_db.value_or(ctx.cfg.snr_db);
  auto frame = embed_pulse(o.length, setup.pulse(snr), o.onset, setup.noise,
                           stream_key(StreamPurpose::search_stream, o.index));
  frame.truth->snr_db = snr;
  const fs::path path = o.output.empty() ? ctx.out / "streams" / "stream.csv" : fs::path(o.output);
  const auto written = emit_report(ctx, path, [&](std::ostream& os) { write_frame_csv(os, frame); });
  if (fs::absolute(written).lexically_normal().string().rfind(fs::absolute(ctx.out).lexically_normal().string(), 0) == 0) {
    manifest.record("make-stream", {written});
  }
}

void cmd_search(const Context& ctx, const std::string& stream_file, bool fast) {
  Manifest manifest(ctx);
  manifest.require_stage("calibrate", "search");
  if (stream_file.empty()) throw ConfigError("search: --stream is required");
  if (!fs::exists(stream_file)) throw MissingArtifact("search: stream file " + stream_file + " does not exist");
  std::ifstream in(stream_file);
  const auto frame = read_frame_csv(in);
  const auto bank = load_bank(ctx);
  window_count(frame.samples.size(), bank.window_len);
  const auto events = fast ? run_bank_fast(frame, bank, ctx.workers) : run_bank(frame, bank, ctx.workers);
  const auto aggs = aggregate_events(events, bank, ctx.cfg.layout);
  const auto stem = fs::path(stream_file).stem().string();
  std::vector<fs::path> outputs;
  outputs.push_back(emit_report(ctx, ctx.out / "reports" / ("events_" + stem + ".csv"),
                                [&](std::ostream& os) { write_events_csv(os, events); }));
  outputs.push_back(emit_report(ctx, ctx.out / "reports" / ("aggregations_" + stem + ".csv"),
                                [&](std::ostream& os) { write_aggregations_csv(os, aggs, bank.shifts()); }));
  manifest.record("search", outputs, {fs::path(stream_file)});
}

void cmd_localize(const Context& ctx, double snr_db, std::size_t tolerance) {
  Manifest manifest(ctx);
  manifest.require_stage("calibrate", "localize");
  const auto bank = load_bank(ctx);
  const auto& det = bank.detectors.front();
  const auto r = localization_study(det, ctx.cfg.setup(), snr_db, ctx.cfg.trials.localization, kLocalizationMargin,
                                    tolerance, ctx.cfg.seed, ctx.workers);
  const auto path = emit_report(ctx, ctx.out / "reports" / "localization.csv", [&](std::ostream& os) {
    os << "# shift=" << det.shift() << ",snr_db=" << fmt_num(snr_db) << ",margin=" << r.margin
       << ",tolerance=" << r.tolerance << ",silent=" << r.silent << ",detected=" << r.detected << '\n';
    os << "contained,trials,rate,ci_low,ci_high\n";
    write_rate_columns(os, r.containment());
    os << "\nfarthest_offset,trials\n";
    for (std::size_t d = 0; d < r.farthest_histogram.size(); ++d) {
      if (r.farthest_histogram[d] > 0) os << d << ',' << r.farthest_histogram[d] << '\n';
    }
  });
  manifest.record("localize", {path});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet + linear SVM pulse detection with time search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_file;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out_dir;
  bool materialize = false;
  app.add_option("--config", config_file, "Experiment config (JSON, comments allowed)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--workers", workers, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
  app.add_flag("--materialize", materialize, "Write full datasets instead of seeds and digests");

  auto* print_config = app.add_subcommand("print-config", "Print the effective configuration");
  auto* gen = app.add_subcommand("gen", "Describe (or materialize) the training datasets");
  auto* train = app.add_subcommand("train", "Train one linear detector per shift");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate detector thresholds on noise");
  auto* eval = app.add_subcommand("eval", "Estimate Pd / Pfa and fuse the detector scores");
  auto* cov = app.add_subcommand("cov", "Covariance of the score triples (pulse and noise)");
  auto* roc = app.add_subcommand("roc", "ROC sweep per detector");
  auto* run = app.add_subcommand("run", "gen, train, calibrate, eval, cov, roc");

  StreamOptions stream_opts;
  auto* make_stream = app.add_subcommand("make-stream", "Write a noise stream with one embedded pulse");
  make_stream->add_option("--length", stream_opts.length, "Stream length in samples");
  make_stream->add_option("--onset", stream_opts.onset, "Pulse onset sample");
  make_stream->add_option("--snr", stream_opts.snr_db, "Pulse SNR in dB (default: config snr_db)");
  make_stream->add_option("--index", stream_opts.index, "Stream index (selects the noise realization)");
  make_stream->add_option("--output", stream_opts.output, "Output CSV path");

  std::string stream_file;
  bool fast = false;
  auto* search = app.add_subcommand("search", "Run the detector bank over every window of a stream");
  search->add_option("--stream", stream_file, "Stream CSV")->required();
  search->add_flag("--fast", fast, "Score windows with folded time-domain templates");

  double loc_snr = 0.0;
  std::size_t loc_tolerance = 6;
  auto* localize = app.add_subcommand("localize", "Where does the first detector fire around a pulse");
  localize->add_option("--snr", loc_snr, "Pulse SNR in dB");
  localize->add_option("--tolerance", loc_tolerance, "Allowed window offset from the onset window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    Context ctx;
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw MissingArtifact("config file " + config_file + " does not exist");
      ctx.cfg = parse_config(read_file(config_file));
      ctx.config_path = fs::path(config_file);
    }
    if (seed) ctx.cfg.seed = *seed;
    if (!out_dir.empty()) ctx.cfg.output_dir = out_dir;
    if (materialize) ctx.cfg.materialize = true;
    ctx.cfg.validate();
    ctx.out = ctx.cfg.output_dir;
    ctx.workers = workers;
    ctx.hash = config_hash(ctx.cfg);

    if (*print_config) {
      std::cout << to_json(ctx.cfg).dump(2) << '\n';
      return 0;
    }
    fs::create_directories(ctx.out);
    if (*gen) cmd_gen(ctx);
    if (*train) cmd_train(ctx);
    if (*calibrate) cmd_calibrate(ctx);
    if (*eval) cmd_eval(ctx);
    if (*cov) cmd_cov(ctx);
    if (*roc) cmd_roc(ctx);
    if (*run) {
      cmd_gen(ctx);
      cmd_train(ctx);
      cmd_calibrate(ctx);
      cmd_eval(ctx);
      cmd_cov(ctx);
      cmd_roc(ctx);
    }
    if (*make_stream) cmd_make_stream(ctx, stream_opts);
    if (*search) cmd_search(ctx, stream_file, fast);
    if (*localize) cmd_localize(ctx, loc_snr, loc_tolerance);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitMissingArtifact;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
