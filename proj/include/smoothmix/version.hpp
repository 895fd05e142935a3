#pragma once

namespace smoothmix {

inline constexpr const char* kVersion = "0.1.0";
// Bumped whenever a CSV column or report field changes meaning or order.
inline constexpr int kSchemaVersion = 1;

}  // namespace smoothmix
