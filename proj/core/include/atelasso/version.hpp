#pragma once

namespace atelasso {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace atelasso
