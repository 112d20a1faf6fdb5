#pragma once

namespace hierlid {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hierlid
