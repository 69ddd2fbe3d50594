#pragma once

namespace fieldkf {

inline constexpr const char* kVersion = "0.1.0";

} // namespace fieldkf
