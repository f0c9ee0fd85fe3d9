#include <algorithm>
#include <cstdlib>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "pulsedet/search.hpp"

using namespace pulsedet;

namespace {

const PulseSetup& default_setup() {
  static const PulseSetup setup = [] {
    PulseSetup s;
    s.noise.seed = 404;
    return s;
  }();
  return setup;
}

const DetectorBank& default_bank() {
  static const DetectorBank bank = fixture::train_bank(default_setup(), {0, 11, 23}, -10.0, 300, 77);
  return bank;
}

SignalFrame quiet_frame(std::size_t stream_len, std::size_t onset, std::uint64_t stream) {
  NoiseSpec quiet = default_setup().noise;
  quiet.std_dev = 1e-12;
  const auto pulse = scale_to_snr(generate_chirp(default_setup().chirp), 0.0, NoiseSpec{});
  return embed_pulse(stream_len, pulse, onset, quiet, stream);
}

std::size_t argmax_window(const std::vector<DetectionEvent>& events, int shift) {
  const DetectionEvent* best = nullptr;
  for (const auto& e : events) {
    if (e.shift != shift) continue;
    if (best == nullptr || e.smooth_score > best->smooth_score) best = &e;
  }
  return best->window_index;
}

}  // namespace

TEST(WindowCount, Examples) {
  EXPECT_EQ(window_count(2048, 1024), 1025u);
  EXPECT_EQ(window_count(1024, 1024), 1u);
  EXPECT_THROW(window_count(1023, 1024), ConfigError);
  EXPECT_THROW(window_count(10, 0), ConfigError);
}

TEST(IterWindows, Enumeration) {
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  const auto w = iter_windows(std::span<const double>(s), 3);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(std::vector<double>(w[0].samples.begin(), w[0].samples.end()), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(std::vector<double>(w[1].samples.begin(), w[1].samples.end()), (std::vector<double>{2, 3, 4}));
  const auto single = iter_windows(std::span<const double>(s), 4);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].samples.data(), s.data());
}

TEST(IterWindows, ConsecutiveWindowsShareAllButOneSample) {
  std::vector<double> s(2048);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
  const auto w = iter_windows(std::span<const double>(s), 1024);
  ASSERT_EQ(w.size(), 1025u);
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    EXPECT_EQ(w[k].index, k);
    std::size_t shared = 0;
    for (std::size_t i = 1; i < 1024; ++i) shared += w[k].samples[i] == w[k + 1].samples[i - 1];
    EXPECT_EQ(shared, 1023u);
    EXPECT_NE(w[k].samples.front(), w[k + 1].samples.back());
  }
}

TEST(RunBank, EventCountAndOrder) {
  const auto frame = embed_pulse(2048, default_setup().pulse(-15.0), 512, default_setup().noise, 1);
  const auto events = run_bank(frame, default_bank());
  ASSERT_EQ(events.size(), 3075u);
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(events[i].window_index, i / 3);
    EXPECT_EQ(events[i].shift, default_bank().shifts()[i % 3]);
    EXPECT_EQ(events[i].decision, events[i].smooth_score > default_bank().detectors[i % 3].threshold ? 1 : -1);
  }
}

TEST(RunBank, FastPathMatchesBaseline) {
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const auto frame = generate_noise(1300, default_setup().noise, 900 + trial);
    const SignalFrame f{frame, std::nullopt};
    const auto slow = run_bank(f, default_bank());
    const auto fast = run_bank_fast(f, default_bank());
    ASSERT_EQ(slow.size(), fast.size());
    for (std::size_t i = 0; i < slow.size(); ++i) {
      EXPECT_EQ(slow[i].window_index, fast[i].window_index);
      EXPECT_EQ(slow[i].shift, fast[i].shift);
      EXPECT_NEAR(slow[i].smooth_score, fast[i].smooth_score, 1e-9);
    }
  }
}

TEST(RunBank, IdenticalForAnyWorkerCount) {
  const auto frame = embed_pulse(1200, default_setup().pulse(-5.0), 100, default_setup().noise, 2);
  const auto one = run_bank(frame, default_bank(), 1);
  for (unsigned workers : {2u, 3u, 7u}) {
    const auto many = run_bank(frame, default_bank(), workers);
    ASSERT_EQ(one.size(), many.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      EXPECT_EQ(one[i].window_index, many[i].window_index);
      EXPECT_EQ(one[i].smooth_score, many[i].smooth_score);
      EXPECT_EQ(one[i].decision, many[i].decision);
    }
  }
}

TEST(RunBank, RejectsBadWindowDivisibility) {
  auto bank = default_bank();
  bank.window_len = 1000;
  const auto frame = generate_noise(1100, default_setup().noise, 3);
  EXPECT_THROW(run_bank(SignalFrame{frame, std::nullopt}, bank), ConfigError);
}

// Decimated d4 features are not shift invariant: the feature energy of a
// pulse varies with its phase against the 16-sample decimation grid, so the
// exhaustive argmax may sit one window off the matched window.
TEST(RunBank, NoiselessPulsePeaksAtOnset) {
  const auto events = run_bank(quiet_frame(2048, 512, 5), default_bank());
  const auto peak = static_cast<std::int64_t>(argmax_window(events, 0));
  EXPECT_LE(std::abs(peak - 512), 1) << "peak at " << peak;
}

TEST(Aggregate, UsesLeadingNoiseIndexRule) {
  EXPECT_EQ(window_for_onset(512, 0, NoiseLayout::leading), 512);
  EXPECT_EQ(window_for_onset(512, 11, NoiseLayout::leading), 501);
  EXPECT_EQ(window_for_onset(512, 23, NoiseLayout::leading), 489);
  EXPECT_EQ(window_for_onset(512, 23, NoiseLayout::trailing), 535);

  const auto events = run_bank(quiet_frame(2048, 512, 6), default_bank());
  for (int shift : {0, 11, 23}) {
    const auto peak = static_cast<std::int64_t>(argmax_window(events, shift));
    EXPECT_LE(std::abs(peak - window_for_onset(512, shift, NoiseLayout::leading)), 1) << "shift " << shift;
    if (shift > 0) {
      EXPECT_GT(std::abs(peak - window_for_onset(512, shift, NoiseLayout::trailing)), 2 * shift - 2);
    }
  }
  const auto aggs = aggregate_events(events, default_bank());
  const auto it = std::find_if(aggs.begin(), aggs.end(),
                               [](const AggregatedDetection& a) { return a.hypothesized_onset == 512; });
  ASSERT_NE(it, aggs.end());
  EXPECT_EQ(it->votes, 3);
  EXPECT_EQ(it->per_shift_scores.at(0), events[512 * 3 + 0].smooth_score);
  EXPECT_EQ(it->per_shift_scores.at(11), events[501 * 3 + 1].smooth_score);
  EXPECT_EQ(it->per_shift_scores.at(23), events[489 * 3 + 2].smooth_score);
}

TEST(Aggregate, EdgesCarryPartialBanks) {
  const auto frame = generate_noise(1100, default_setup().noise, 7);
  const auto events = run_bank(SignalFrame{frame, std::nullopt}, default_bank());
  const auto aggs = aggregate_events(events, default_bank());
  ASSERT_EQ(aggs.size(), 77u + 23u);
  EXPECT_EQ(aggs.front().hypothesized_onset, 0);
  EXPECT_EQ(aggs.front().per_shift_scores.size(), 1u);
  EXPECT_EQ(aggs.back().hypothesized_onset, 76 + 23);
  EXPECT_EQ(aggs.back().per_shift_scores.size(), 1u);
  EXPECT_EQ(aggs[30].per_shift_scores.size(), 3u);
  for (const auto& a : aggs) {
    EXPECT_GE(a.votes, 0);
    EXPECT_LE(a.votes, 3);
  }
  const auto trailing = aggregate_events(events, default_bank(), NoiseLayout::trailing);
  EXPECT_EQ(trailing.front().hypothesized_onset, -23);
  EXPECT_EQ(trailing.back().hypothesized_onset, 76);
}

TEST(Aggregate, SingleDetectorIsPassThrough) {
  DetectorBank bank = default_bank();
  bank.detectors.resize(1);
  const auto frame = generate_noise(1200, default_setup().noise, 8);
  const auto events = run_bank(SignalFrame{frame, std::nullopt}, bank);
  const auto aggs = aggregate_events(events, bank);
  ASSERT_EQ(aggs.size(), events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(aggs[i].hypothesized_onset, static_cast<std::int64_t>(events[i].window_index));
    EXPECT_EQ(aggs[i].per_shift_scores.at(0), events[i].smooth_score);
    EXPECT_EQ(aggs[i].votes, events[i].decision > 0 ? 1 : 0);
  }
}

TEST(Aggregate, RejectsMixedRuns) {
  const auto a = run_bank(SignalFrame{generate_noise(1050, default_setup().noise, 9), std::nullopt}, default_bank());
  const auto b = run_bank(SignalFrame{generate_noise(1050, default_setup().noise, 10), std::nullopt}, default_bank());
  std::vector<DetectionEvent> mixed(a.begin(), a.begin() + 30);
  mixed.insert(mixed.end(), b.begin(), b.begin() + 30);
  EXPECT_THROW(aggregate_events(mixed, default_bank()), ConfigError);
  std::vector<DetectionEvent> ragged(a.begin(), a.end() - 1);
  EXPECT_THROW(aggregate_events(ragged, default_bank()), ConfigError);
}

TEST(Aggregate, NoiseVotesMatchPerDetectorRates) {
  const auto shifts = default_bank().shifts();
  std::size_t full_cells = 0, votes = 0, expected_votes = 0, fired = 0, decisions = 0;
  for (std::uint64_t t = 0; t < 40; ++t) {
    const auto frame = generate_noise(2048, default_setup().noise, 5000 + t);
    const auto events = run_bank_fast(SignalFrame{frame, std::nullopt}, default_bank());
    for (const auto& e : events) {
      ++decisions;
      fired += e.decision > 0;
    }
    for (const auto& a : aggregate_events(events, default_bank())) {
      if (a.per_shift_scores.size() != shifts.size()) continue;
      ++full_cells;
      votes += static_cast<std::size_t>(a.votes);
      for (std::size_t j = 0; j < shifts.size(); ++j) {
        const auto k = static_cast<std::size_t>(window_for_onset(a.hypothesized_onset, shifts[j], NoiseLayout::leading));
        expected_votes += events[k * shifts.size() + j].decision > 0;
      }
    }
  }
  EXPECT_EQ(full_cells, 40u * (1025u - 23u));
  EXPECT_EQ(votes, expected_votes);
  const double rate = static_cast<double>(fired) / static_cast<double>(decisions);
  EXPECT_GT(rate, 2e-4);
  EXPECT_LT(rate, 4e-3);
}
