#pragma once

namespace ergoseg {
inline constexpr const char* kVersion = "0.1.0";
}
