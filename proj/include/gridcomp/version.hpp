#pragma once

namespace gridcomp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gridcomp
