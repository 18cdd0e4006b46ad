#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace twinwatch {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

} // namespace twinwatch
