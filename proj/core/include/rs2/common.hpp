#pragma once

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rs2 {

// Rejected input or malformed state. CLI maps this to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class T, class... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    format_into(os, rest...);
}
} // namespace detail

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    throw Error(os.str());
}

template <class... Args>
void require(bool cond, const Args&... args) {
    if (!cond) fail(args...);
}

// Shortest round-trip decimal form; bit-stable across runs (std::to_chars).
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Fixed decimal places (table cells).
inline std::string fmt_fixed(double v, int places) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, places);
    return std::string(buf, res.ptr);
}

} // namespace rs2
