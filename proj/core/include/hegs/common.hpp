#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hegs {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Throw with a formatted location-tagged message when a contract is violated.
#define HEGS_CHECK(cond, msg)                                                  \
    do {                                                                       \
        if (!(cond)) {                                                         \
            std::ostringstream oss_;                                           \
            oss_ << "check failed: " << #cond << " @ " << __FILE__ << ":"      \
                 << __LINE__ << " | " << msg;                                  \
            throw ::hegs::Error(oss_.str());                                   \
        }                                                                      \
    } while (0)

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << "(";
    for (size_t i = 0; i < s.size(); ++i) oss << (i ? "," : "") << s[i];
    oss << ")";
    return oss.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

} // namespace hegs
