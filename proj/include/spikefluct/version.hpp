#pragma once

namespace spikefluct {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spikefluct
