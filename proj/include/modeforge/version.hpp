#pragma once

namespace modeforge {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace modeforge
