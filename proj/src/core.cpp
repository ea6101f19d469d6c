#include "mdflow/core.hpp"

#include <cstdio>

namespace mdflow {

std::string format_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace mdflow
