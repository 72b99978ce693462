#pragma once

namespace pctrans {
inline constexpr const char* kVersion = "0.1.0";
}
