#pragma once

#include <vector>

#include "cityfm/geo.hpp"

namespace cityfm {

inline constexpr int kLocDim = 128;        // d, per coordinate
inline constexpr double kLocLambda = 100;  // rescale factor applied to omega_0

// Sinusoidal code of length 2d: latitude block then longitude block. Within a
// block, component 2k is sin(omega_k * p) and 2k+1 is cos(omega_k * p) with
// omega_k = lambda / 10000^(2k/d). Positions are fed in degrees as-is.
std::vector<double> encode_location(GeoPoint p, int d = kLocDim, double lambda = kLocLambda);

}  // namespace cityfm
