#pragma once

namespace driftwatch {

inline constexpr const char* kToolName = "driftwatch";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace driftwatch
