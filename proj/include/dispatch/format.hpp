#pragma once

#include <cstdio>
#include <string>

namespace dispatch {

/// Fixed numeric rendering for CSV output: 12 significant digits, shortest
/// form. One formatting path everywhere keeps command output byte-stable.
inline std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

} // namespace dispatch
