#pragma once

namespace t3sr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace t3sr
