#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace pulsedet {

/// Linear-frequency sweep. Frequencies are normalized (cycles per sample).
struct ChirpSpec {
  std::size_t num_samples = 1024;
  double start_freq = 0.0125;
  double end_freq = 0.2225;
  double amplitude = 1.0;

  void validate() const {
    detail::require(num_samples >= 2, "chirp.num_samples must be >= 2");
    detail::require(start_freq > 0.0 && start_freq < 0.5,
                    "chirp.start_freq must lie strictly inside (0, 0.5)");
    detail::require(end_freq > 0.0 && end_freq < 0.5,
                    "chirp.end_freq must lie strictly inside (0, 0.5)");
    detail::require(start_freq != end_freq, "chirp.start_freq must differ from chirp.end_freq");
    detail::require(amplitude > 0.0 && std::isfinite(amplitude), "chirp.amplitude must be > 0");
  }
};

/// White Gaussian noise. Mean is carried for completeness; experiments keep it at 0.
struct NoiseSpec {
  double mean = 0.0;
  double std_dev = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(std::isfinite(mean), "noise.mean must be finite");
    detail::require(std_dev > 0.0 && std::isfinite(std_dev), "noise.std_dev must be > 0");
  }
};

/// Placement of the pulse (or the part of it) contained in a frame.
struct PulseTruth {
  std::size_t onset_index = 0;
  std::size_t pulse_len = 0;
  double snr_db = 0.0;
};

struct SignalFrame {
  std::vector<double> samples;
  std::optional<PulseTruth> truth;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Where the noise fill goes in a shifted training window.
///   leading:  k noise samples, then pulse[0, S-k)
///   trailing: pulse[k, S), then k noise samples
enum class NoiseLayout { leading, trailing };

inline double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

inline std::vector<double> generate_chirp(const ChirpSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_samples;
  const double rate = (spec.end_freq - spec.start_freq) / static_cast<double>(n - 1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double phase = 2.0 * std::numbers::pi * (spec.start_freq * t + 0.5 * rate * t * t);
    out[i] = spec.amplitude * std::sin(phase);
  }
  return out;
}

/// Rescales `pulse` so that mean_power(result) / noise variance equals 10^(snr_db/10).
inline std::vector<double> scale_to_snr(std::span<const double> pulse, double snr_db,
                                        const NoiseSpec& noise) {
  detail::require(!pulse.empty(), "scale_to_snr: pulse is empty");
  noise.validate();
  detail::require(std::isfinite(snr_db), "scale_to_snr: snr_db must be finite");
  const double power = mean_power(pulse);
  if (!(power > 0.0)) throw ConfigError("scale_to_snr: pulse has zero power, SNR is unattainable");
  const double target = std::pow(10.0, snr_db / 10.0) * noise.std_dev * noise.std_dev;
  const double gain = std::sqrt(target / power);
  std::vector<double> out(pulse.begin(), pulse.end());
  for (double& v : out) v *= gain;
  return out;
}

inline std::vector<double> generate_noise(std::size_t n, const NoiseSpec& noise,
                                          std::uint64_t stream_id) {
  detail::require(n >= 1, "generate_noise: n must be >= 1");
  noise.validate();
  StreamRng rng(noise.seed, stream_id);
  std::vector<double> out(n);
  for (double& v : out) v = noise.mean + noise.std_dev * rng.gaussian();
  return out;
}

/// One training window of length S = pulse.size() holding `shift` noise-only
/// samples and the matching S - shift pulse samples, plus noise throughout.
inline SignalFrame make_training_window(std::size_t shift, std::span<const double> pulse,
                                        const NoiseSpec& noise, std::uint64_t stream_id,
                                        NoiseLayout layout = NoiseLayout::leading) {
  const std::size_t len = pulse.size();
  detail::require(len >= 1, "make_training_window: pulse is empty");
  detail::require(shift < len, "make_training_window: shift " + std::to_string(shift) +
                                   " must be < window length " + std::to_string(len));
  SignalFrame frame;
  frame.samples = generate_noise(len, noise, stream_id);
  const std::size_t fragment = len - shift;
  if (layout == NoiseLayout::leading) {
    for (std::size_t i = 0; i < fragment; ++i) frame.samples[shift + i] += pulse[i];
    frame.truth = PulseTruth{shift, fragment, 0.0};
  } else {
    for (std::size_t i = 0; i < fragment; ++i) frame.samples[i] += pulse[shift + i];
    frame.truth = PulseTruth{0, fragment, 0.0};
  }
  return frame;
}

inline SignalFrame embed_pulse(std::size_t stream_len, std::span<const double> pulse,
                               std::size_t onset, const NoiseSpec& noise,
                               std::uint64_t stream_id) {
  detail::require(stream_len >= 1, "embed_pulse: stream_len must be >= 1");
  detail::require(!pulse.empty(), "embed_pulse: pulse is empty");
  detail::require(onset + pulse.size() <= stream_len,
                  "embed_pulse: pulse overruns stream (onset " + std::to_string(onset) + " + " +
                      std::to_string(pulse.size()) + " > " + std::to_string(stream_len) + ")");
  SignalFrame frame;
  frame.samples = generate_noise(stream_len, noise, stream_id);
  for (std::size_t i = 0; i < pulse.size(); ++i) frame.samples[onset + i] += pulse[i];
  frame.truth = PulseTruth{onset, pulse.size(), 0.0};
  return frame;
}

}  // namespace pulsedet
