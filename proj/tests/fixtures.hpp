#pragma once

#include <cstdint>
#include <vector>

#include "pulsedet/detector.hpp"
#include "pulsedet/search.hpp"

namespace fixture {

// Trains and calibrates one detector per shift.
inline pulsedet::DetectorBank train_bank(const pulsedet::PulseSetup& setup,
                                         const std::vector<int>& shifts, double snr_db,
                                         std::size_t n_per_class, std::uint64_t seed,
                                         double pfa = 1e-3) {
  using namespace pulsedet;
  DetectorBank bank;
  bank.wavelet = setup.wavelet;
  bank.window_len = setup.window_len();
  for (int shift : shifts) {
    const auto set = build_training_set(shift, n_per_class, n_per_class, snr_db, setup, seed);
    const auto model = train_linear_svm(set);
    const auto null = noise_scores(model, setup, min_calibration_size(pfa), seed,
                                   StreamPurpose::calibration, static_cast<std::uint64_t>(shift));
    bank.detectors.push_back(calibrate_threshold(model, null, pfa));
  }
  return bank;
}

}  // namespace fixture
