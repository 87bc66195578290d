#pragma once

namespace aphi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aphi
