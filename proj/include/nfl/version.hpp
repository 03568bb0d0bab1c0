#pragma once

namespace nfl {
inline constexpr const char* kVersion = "0.1.0";
}
