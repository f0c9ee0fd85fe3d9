#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pulsedet/io.hpp"

using namespace pulsedet;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsDescribeThePaperSetup) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.chirp.num_samples, 1024u);
  EXPECT_EQ(c.wavelet.levels, 4);
  EXPECT_EQ(c.shifts, (std::vector<int>{0, 11, 23}));
  EXPECT_EQ(c.snr_db, -15.0);
  EXPECT_EQ(c.target_pfa, 1e-3);
  EXPECT_EQ(c.noise.mean, 0.0);
  EXPECT_EQ(c.noise.std_dev, 1.0);
  EXPECT_EQ(c.trials.covariance, 5000u);
  EXPECT_EQ(c.layout, NoiseLayout::leading);
  EXPECT_EQ(c.setup().feature_len(), 64u);
}

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.shifts = {0, 5};
  c.snr_db = -9.5;
  c.layout = NoiseLayout::trailing;
  c.trials.eval_pd = 777;
  c.seed = 42;
  const auto back = parse_config(to_json(c).dump(2));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, AcceptsComments) {
  const auto c = parse_config(R"({
    // quick run
    "snr_db": -10, /* louder */
    "trials": {"eval_pd": 200}
  })");
  EXPECT_EQ(c.snr_db, -10.0);
  EXPECT_EQ(c.trials.eval_pd, 200u);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_of(R"({"shifts": [0, 11, 1024]})").find("shifts[2]"), std::string::npos);
  EXPECT_NE(error_of(R"({"shifts": [11, 0]})").find("shifts"), std::string::npos);
  EXPECT_NE(error_of(R"({"chirp": {"num_samples": 1000}})").find("1000"), std::string::npos);
  EXPECT_NE(error_of(R"({"target_pfa": 2})").find("target_pfa"), std::string::npos);
  EXPECT_NE(error_of(R"({"trials": {"calibration": 10}})").find("trials.calibration"), std::string::npos);
  EXPECT_NE(error_of(R"({"trials": {"eval_pfa": 10}})").find("trials.eval_pfa"), std::string::npos);
  EXPECT_NE(error_of(R"({"snr": 3})").find("snr"), std::string::npos);
  EXPECT_NE(error_of(R"({"svm": {"c": "big"}})").find("svm.c"), std::string::npos);
  EXPECT_NE(error_of(R"({"layout": "middle"})").find("layout"), std::string::npos);
  EXPECT_NE(error_of(R"({"wavelet": {"family": "haar"}})").find("wavelet.family"), std::string::npos);
  EXPECT_NE(error_of("{ not json").find("JSON"), std::string::npos);
}

TEST(Models, JsonRoundTripIsExact) {
  LinearModel m;
  m.weights = {0.1, -2.5e-7, 3.0 / 7.0};
  m.bias = -1.0 / 3.0;
  m.shift = 11;
  m.c_param = 0.5;
  m.summary = {12, 5.25, 5.2499, 9};
  CalibratedDetector det{m, 4.0 / 9.0, 1e-3, 200000};
  const auto j = model_to_json(m, DecompositionConfig{}, {7, -15.0, 500, 500}, &det);
  const auto loaded = model_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(loaded.model.weights, m.weights);
  EXPECT_EQ(loaded.model.bias, m.bias);
  EXPECT_EQ(loaded.model.shift, 11);
  EXPECT_EQ(loaded.model.summary.iterations, 12u);
  EXPECT_EQ(loaded.provenance.seed, 7u);
  ASSERT_TRUE(loaded.calibrated.has_value());
  EXPECT_EQ(loaded.calibrated->threshold, det.threshold);
  EXPECT_EQ(loaded.calibrated->calibration_n, 200000u);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"format": "other"})")), ConfigError);
  EXPECT_THROW(model_from_json(nlohmann::json::parse(R"({"format": "pulsedet-model"})")), ConfigError);
}

TEST(Frames, CsvRoundTripKeepsTruthAndBits) {
  SignalFrame f;
  f.samples = {0.1, -1e-300, 3.0 / 7.0, 12345.678901234567};
  f.truth = PulseTruth{1, 2, -15.0};
  std::stringstream ss;
  write_frame_csv(ss, f);
  const auto back = read_frame_csv(ss);
  EXPECT_EQ(back.samples, f.samples);
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(back.truth->onset_index, 1u);
  EXPECT_EQ(back.truth->pulse_len, 2u);
  EXPECT_EQ(back.truth->snr_db, -15.0);
}

TEST(Frames, RejectsBadInput) {
  std::stringstream bad("sample\n1.0\nabc\n");
  EXPECT_THROW(read_frame_csv(bad), ConfigError);
  std::stringstream overrun("# onset_index=3,pulse_len=5,snr_db=0\nsample\n1\n2\n");
  EXPECT_THROW(read_frame_csv(overrun), ConfigError);
  std::stringstream bare("1\n2\n3\n");
  EXPECT_EQ(read_frame_csv(bare).samples.size(), 3u);
}

TEST(Reports, CsvLayouts) {
  std::vector<DetectionEvent> events{{0, 0, 1.5, 1}, {0, 11, -0.25, -1}};
  std::stringstream ev;
  write_events_csv(ev, events);
  EXPECT_EQ(ev.str(), "window_index,shift,smooth_score,decision\n0,0,1.5,1\n0,11,-0.25,-1\n");

  AggregatedDetection a;
  a.hypothesized_onset = 5;
  a.votes = 1;
  a.per_shift_scores = {{0, 2.0}, {23, -1.0}};
  std::stringstream ag;
  write_aggregations_csv(ag, std::vector<AggregatedDetection>{a}, {0, 11, 23});
  EXPECT_EQ(ag.str(), "onset,votes,score_0,score_11,score_23\n5,1,2,,-1\n");

  CovarianceReport r;
  r.matrix = SquareMatrix(2);
  r.matrix.values = {1.0, 0.5, 0.5, 2.0};
  r.n_obs = 5000;
  r.condition = Condition::noise;
  r.shifts = {0, 11};
  std::stringstream cv;
  write_covariance_csv(cv, r);
  EXPECT_EQ(cv.str(), "# covariance condition=noise,n_obs=5000,snr_db=none\nrow,shift_0,shift_11\n"
                      "shift_0,1,0.5\nshift_11,0.5,2\n");

  std::vector<RocPoint> roc{{0.0, wilson_interval(1, 10), wilson_interval(9, 10)}};
  std::stringstream rc;
  write_roc_csv(rc, roc);
  EXPECT_EQ(rc.str().substr(0, rc.str().find('\n')), "pfa,pd,threshold,pfa_ci_low,pfa_ci_high,pd_ci_low,pd_ci_high");
}

TEST(Numbers, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.2250738585072014e-308, 1e300}) {
    EXPECT_EQ(std::stod(fmt_num(v)), v);
  }
}
