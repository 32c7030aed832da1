#pragma once

namespace leakscope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace leakscope
