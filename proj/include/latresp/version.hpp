#pragma once

namespace latresp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latresp
