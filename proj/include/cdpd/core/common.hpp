#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cdpd {

using i64 = std::int64_t;
using i32 = std::int32_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u8 = std::uint8_t;

// All recoverable failures surface as cdpd::Error; the CLI maps them to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class A, class... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    format_into(os, rest...);
}
} // namespace detail

template <class... Args>
std::string strcat_msg(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
    throw Error(strcat_msg(args...));
}

#define CDPD_CHECK(cond, ...)                    \
    do {                                         \
        if (!(cond)) ::cdpd::fail(__VA_ARGS__);  \
    } while (0)

inline i64 ceil_div(i64 a, i64 b) { return (a + b - 1) / b; }

} // namespace cdpd
