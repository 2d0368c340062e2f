#pragma once

#include <algorithm>

namespace semfuse {

// Convex step toward 1: conf + gain * (1 - conf).
inline double raise_confidence(double conf, double gain) {
  return std::clamp(conf + gain * (1.0 - conf), 0.0, 1.0);
}

// Convex step toward 0: conf - gain * conf.
inline double lower_confidence(double conf, double gain) {
  return std::clamp(conf - gain * conf, 0.0, 1.0);
}

}  // namespace semfuse
