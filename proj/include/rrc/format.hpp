#pragma once

#include <string>

namespace rrc {

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double value);

}  // namespace rrc
