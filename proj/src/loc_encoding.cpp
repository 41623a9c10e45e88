#include "cityfm/loc_encoding.hpp"

#include <cmath>

#include "cityfm/util.hpp"

namespace cityfm {

std::vector<double> encode_location(GeoPoint p, int d, double lambda) {
  if (d < 2 || d % 2 != 0) throw Error("encode_location: d must be even and >= 2");
  if (!(lambda > 0)) throw Error("encode_location: lambda must be positive");
  std::vector<double> out(static_cast<std::size_t>(2) * d);
  const double coords[2] = {p.lat, p.lon};
  for (int block = 0; block < 2; ++block) {
    double* v = out.data() + static_cast<std::size_t>(block) * d;
    for (int k = 0; 2 * k < d; ++k) {
      const double omega = lambda / std::pow(10000.0, 2.0 * k / d);
      const double angle = omega * coords[block];
      v[2 * k] = std::sin(angle);
      v[2 * k + 1] = std::cos(angle);
    }
  }
  return out;
}

}  // namespace cityfm
