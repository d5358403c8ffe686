#include "rrc/format.hpp"

#include <cstdio>

namespace rrc {

std::string format_real(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

}  // namespace rrc
