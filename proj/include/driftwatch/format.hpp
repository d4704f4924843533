#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace driftwatch::detail {

/// Shortest round-trip decimal form of a double. Every file this library
/// writes must be byte-stable across runs, so all floating-point output
/// funnels through here (std::to_chars is locale-independent).
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace driftwatch::detail
