#pragma once

namespace seqmco {
inline constexpr const char* kVersion = "0.1.0";
}
