#pragma once

namespace ctpipe {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ctpipe
