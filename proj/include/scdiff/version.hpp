#pragma once

namespace scdiff {
inline constexpr const char* kVersion = "scdiff-0.1.0";
}
