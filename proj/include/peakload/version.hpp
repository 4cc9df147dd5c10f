#pragma once

namespace peakload {
inline constexpr const char* kVersion = "0.1.0";
}
