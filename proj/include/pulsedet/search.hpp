#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "detector.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "signalgen.hpp"
#include "wavelet.hpp"

namespace pulsedet {

struct TimeSearchConfig {
  std::size_t stream_len = 2048;
  std::size_t window_len = 1024;

  void validate() const {
    detail::require(window_len >= 1, "search: window_len must be >= 1");
    detail::require(stream_len >= window_len, "search: stream_len " + std::to_string(stream_len) +
                                                  " is shorter than window_len " +
                                                  std::to_string(window_len));
  }
};

/// Number of stride-1 windows of length `window_len` over `stream_len` samples.
inline std::size_t window_count(std::size_t stream_len, std::size_t window_len) {
  TimeSearchConfig{stream_len, window_len}.validate();
  return stream_len - window_len + 1;
}

struct WindowView {
  std::size_t index = 0;
  std::span<const double> samples;
};

/// Window k covers samples [k, k + window_len).
inline std::vector<WindowView> iter_windows(std::span<const double> stream, std::size_t window_len) {
  const std::size_t count = window_count(stream.size(), window_len);
  std::vector<WindowView> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back({k, stream.subspan(k, window_len)});
  return out;
}

inline std::vector<WindowView> iter_windows(const SignalFrame& frame, std::size_t window_len) {
  return iter_windows(std::span<const double>(frame.samples), window_len);
}

/// Detectors for distinct pulse shifts, all fed by the same wavelet features.
struct DetectorBank {
  std::vector<CalibratedDetector> detectors;
  DecompositionConfig wavelet;
  std::size_t window_len = 1024;

  std::size_t size() const noexcept { return detectors.size(); }

  std::vector<int> shifts() const {
    std::vector<int> out;
    out.reserve(detectors.size());
    for (const auto& d : detectors) out.push_back(d.shift());
    return out;
  }

  void validate() const {
    detail::require(!detectors.empty(), "bank: no detectors");
    check_divisible(window_len, wavelet.levels);
    const std::size_t dim = window_len >> wavelet.levels;
    int previous = -1;
    for (const auto& d : detectors) {
      detail::require(d.model.n_features() == dim, "bank: detector feature dimension " +
                                                       std::to_string(d.model.n_features()) +
                                                       " does not match " + std::to_string(dim));
      detail::require(d.shift() > previous, "bank: shifts must be distinct and increasing");
      detail::require(static_cast<std::size_t>(d.shift()) < window_len,
                      "bank: shift must be < window_len");
      previous = d.shift();
    }
  }
};

struct DetectionEvent {
  std::size_t window_index = 0;
  int shift = 0;
  double smooth_score = 0.0;
  int decision = -1;
};

/// Scores every window with every detector. Events are ordered by window
/// index, then by bank order; the result is identical for any worker count.
inline std::vector<DetectionEvent> run_bank(const SignalFrame& frame, const DetectorBank& bank,
                                            unsigned workers = 1) {
  bank.validate();
  const auto windows = iter_windows(frame, bank.window_len);
  const std::size_t m = bank.size();
  std::vector<DetectionEvent> events(windows.size() * m);
  parallel_for(windows.size(), workers, [&](std::size_t k) {
    const auto features = extract_features(windows[k].samples, bank.wavelet);
    for (std::size_t j = 0; j < m; ++j) {
      const auto& det = bank.detectors[j];
      const double s = score(det.model, features);
      events[k * m + j] = DetectionEvent{k, det.shift(), s, decide(s, det.threshold)};
    }
  });
  return events;
}

/// Same output as run_bank, computed with one time-domain dot product per
/// detector and window (the feature map is linear, so each model folds into
/// a single length-S template).
inline std::vector<DetectionEvent> run_bank_fast(const SignalFrame& frame, const DetectorBank& bank,
                                                 unsigned workers = 1) {
  bank.validate();
  const std::size_t m = bank.size();
  std::vector<std::vector<double>> templates;
  templates.reserve(m);
  for (const auto& det : bank.detectors) {
    templates.push_back(feature_adjoint(det.model.weights, bank.window_len, bank.wavelet));
  }
  const auto windows = iter_windows(frame, bank.window_len);
  std::vector<DetectionEvent> events(windows.size() * m);
  parallel_for(windows.size(), workers, [&](std::size_t k) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& det = bank.detectors[j];
      const double s = dot(templates[j], windows[k].samples) + det.model.bias;
      events[k * m + j] = DetectionEvent{k, det.shift(), s, decide(s, det.threshold)};
    }
  });
  return events;
}

struct AggregatedDetection {
  std::int64_t hypothesized_onset = 0;
  int votes = 0;
  std::map<int, double> per_shift_scores;
};

/// Window index at which the k-shift detector looks at a pulse starting at `onset`.
inline std::int64_t window_for_onset(std::int64_t onset, int shift, NoiseLayout layout) noexcept {
  return layout == NoiseLayout::leading ? onset - shift : onset + shift;
}

/// Regroups events by hypothesized pulse onset. Onsets near the stream edges
/// carry only the detectors whose window is in range.
inline std::vector<AggregatedDetection> aggregate_events(std::span<const DetectionEvent> events,
                                                         const DetectorBank& bank,
                                                         NoiseLayout layout = NoiseLayout::leading) {
  bank.validate();
  const std::size_t m = bank.size();
  const auto shifts = bank.shifts();
  detail::require(!events.empty() && events.size() % m == 0,
                  "aggregate: event count is not a multiple of the bank size");
  const std::size_t count = events.size() / m;

  // Lay events out as [window][detector] and reject anything that is not one complete run.
  std::vector<const DetectionEvent*> grid(count * m, nullptr);
  for (const auto& e : events) {
    const auto pos = std::find(shifts.begin(), shifts.end(), e.shift);
    detail::require(pos != shifts.end(), "aggregate: event shift " + std::to_string(e.shift) +
                                             " is not in the bank");
    detail::require(e.window_index < count, "aggregate: window index out of range for one run");
    auto& slot = grid[e.window_index * m + static_cast<std::size_t>(pos - shifts.begin())];
    detail::require(slot == nullptr, "aggregate: duplicate (window, shift) event; events mix runs");
    slot = &e;
  }

  const int max_shift = shifts.back();
  const auto last_window = static_cast<std::int64_t>(count) - 1;
  const std::int64_t first = layout == NoiseLayout::leading ? 0 : -max_shift;
  const std::int64_t last = layout == NoiseLayout::leading ? last_window + max_shift : last_window;

  std::vector<AggregatedDetection> out;
  out.reserve(static_cast<std::size_t>(last - first + 1));
  for (std::int64_t h = first; h <= last; ++h) {
    AggregatedDetection agg;
    agg.hypothesized_onset = h;
    for (std::size_t j = 0; j < m; ++j) {
      const std::int64_t k = window_for_onset(h, shifts[j], layout);
      if (k < 0 || k > last_window) continue;
      const DetectionEvent* e = grid[static_cast<std::size_t>(k) * m + j];
      agg.per_shift_scores[shifts[j]] = e->smooth_score;
      if (e->decision > 0) ++agg.votes;
    }
    if (!agg.per_shift_scores.empty()) out.push_back(std::move(agg));
  }
  return out;
}

}  // namespace pulsedet
