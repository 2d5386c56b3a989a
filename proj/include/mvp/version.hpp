#pragma once

namespace mvp {
inline constexpr const char* kVersion = "0.1.0";
}
