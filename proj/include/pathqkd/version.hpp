#pragma once

namespace pathqkd {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace pathqkd
