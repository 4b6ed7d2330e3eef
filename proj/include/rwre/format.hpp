#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace rwre {

/// Shortest text that round-trips a double; "inf"/"-inf"/"nan" otherwise.
inline std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

}  // namespace rwre
