#include "simfuse/common.hpp"

#include <cstdio>
#include <iostream>

namespace simfuse {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void warn(const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
}

} // namespace simfuse
