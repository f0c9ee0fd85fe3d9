#pragma once

namespace pulsedet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pulsedet
