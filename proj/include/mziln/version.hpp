#pragma once

namespace mziln {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mziln
