#pragma once

namespace crvos {
inline constexpr const char* kVersion = "0.1.0";
}
