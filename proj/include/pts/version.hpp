#pragma once

namespace pts {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace pts
