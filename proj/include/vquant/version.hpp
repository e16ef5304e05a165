#pragma once

namespace vquant {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace vquant
