#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pulsedet {

inline constexpr int kExitValidation = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumeric = 4;

/// Invalid parameters or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A required upstream artifact (model file, manifest, stream) is absent. Exit code 3.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its target. Exit code 4.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::vector<double> trace = {})
      : std::runtime_error(what), trace_(std::move(trace)) {}

  /// Objective or gap values recorded while the procedure ran.
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail
}  // namespace pulsedet
