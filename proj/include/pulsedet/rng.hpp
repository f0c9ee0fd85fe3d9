#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace pulsedet {

// Counter-based random streams.
//
// Every stream is addressed by (seed, stream_id). The state is a 64-bit
// counter advanced by the golden-ratio increment and finalized with the
// SplitMix64 mixer, so two streams with different keys never share state
// and a stream can be recreated from its key alone. Gaussian variates use
// the Marsaglia polar method, which only needs log and sqrt.

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Purpose tags occupy the top 16 bits of a stream id.
enum class StreamPurpose : std::uint16_t {
  training_positive = 1,
  training_negative = 2,
  calibration = 3,
  eval_noise = 4,
  eval_pulse = 5,
  covariance_pulse = 6,
  covariance_noise = 7,
  combiner_positive = 8,
  combiner_negative = 9,
  combiner_calibration = 10,
  combiner_eval_noise = 11,
  combiner_eval_pulse = 12,
  search_stream = 13,
  localization = 14,
  roc_noise = 15,
  roc_pulse = 16,
  bootstrap = 17,
  init = 18,
  user = 0x7fff,
};

/// Builds a stream id from a purpose tag, a sub-channel (for example a
/// detector shift) and a trial index.
inline constexpr std::uint64_t stream_key(StreamPurpose purpose, std::uint64_t index,
                                          std::uint64_t channel = 0) noexcept {
  return (static_cast<std::uint64_t>(purpose) << 48) | ((channel & 0xffffULL) << 32) |
         (index & 0xffffffffULL);
}

class StreamRng {
 public:
  using result_type = std::uint64_t;

  StreamRng(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : state_(splitmix64_mix(splitmix64_mix(seed) ^ (stream_id * 0xd1342543de82ef95ULL +
                                                      0x2545f4914f6cdd1dULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by multiply-shift (bound > 0).
  std::uint64_t below(std::uint64_t bound) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * bound) >> 64);
  }

  double gaussian() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pulsedet
