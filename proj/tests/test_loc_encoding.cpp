#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "cityfm/loc_encoding.hpp"
#include "cityfm/util.hpp"

using namespace cityfm;

TEST_CASE("encoding length and block layout") {
  const auto v = encode_location({1.3, 103.8});
  CHECK(v.size() == 2 * kLocDim);  // lat block then lon block, d components each

  const auto small = encode_location({1.3, 103.8}, 8, 100.0);
  CHECK(small.size() == 16);
}

TEST_CASE("components match the frequency formula") {
  const GeoPoint p{1.3, 103.8};
  const int d = 128;
  const double lambda = 100.0;
  const auto v = encode_location(p, d, lambda);

  for (int k = 0; 2 * k < d; ++k) {
    const double omega = lambda / std::pow(10000.0, 2.0 * k / d);
    CHECK(v[2 * k] == doctest::Approx(std::sin(omega * p.lat)).epsilon(1e-12));
    CHECK(v[2 * k + 1] == doctest::Approx(std::cos(omega * p.lat)).epsilon(1e-12));
    CHECK(v[d + 2 * k] == doctest::Approx(std::sin(omega * p.lon)).epsilon(1e-12));
    CHECK(v[d + 2 * k + 1] == doctest::Approx(std::cos(omega * p.lon)).epsilon(1e-12));
  }
}

TEST_CASE("sin/cos pairs sit on the unit circle") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const GeoPoint p{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    const auto v = encode_location(p);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
      CHECK(std::abs(v[i] * v[i] + v[i + 1] * v[i + 1] - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("translation acts as a per-frequency rotation") {
  // e(p + delta) must equal the 2x2 rotation of e(p) by omega_k * delta in
  // every (sin, cos) pair; this is the property that makes relative offsets
  // recoverable by a linear map.
  Rng rng(5);
  const int d = 128;
  const double lambda = 100.0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const GeoPoint p{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    const double dlat = rng.uniform(-0.05, 0.05);
    const double dlon = rng.uniform(-0.05, 0.05);
    const auto base = encode_location(p, d, lambda);
    const auto moved = encode_location({p.lat + dlat, p.lon + dlon}, d, lambda);

    for (int block = 0; block < 2; ++block) {
      const double delta = block == 0 ? dlat : dlon;
      for (int k = 0; 2 * k < d; ++k) {
        const double omega = lambda / std::pow(10000.0, 2.0 * k / d);
        const double c = std::cos(omega * delta), s = std::sin(omega * delta);
        const double sin_p = base[block * d + 2 * k], cos_p = base[block * d + 2 * k + 1];
        const double want_sin = c * sin_p + s * cos_p;
        const double want_cos = c * cos_p - s * sin_p;
        worst = std::max(worst, std::abs(moved[block * d + 2 * k] - want_sin));
        worst = std::max(worst, std::abs(moved[block * d + 2 * k + 1] - want_cos));
      }
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("origin encodes as alternating zeros and ones") {
  const auto v = encode_location({0.0, 0.0});
  for (std::size_t i = 0; i < v.size(); i += 2) {
    CHECK(v[i] == 0.0);
    CHECK(v[i + 1] == 1.0);
  }
}

TEST_CASE("lambda rescales the base frequency") {
  // omega_0 = lambda, so the first component is sin(lambda * lat)
  const GeoPoint p{0.35, 10.0};
  const auto v = encode_location(p, 4, 7.0);
  CHECK(v[0] == doctest::Approx(std::sin(7.0 * p.lat)).epsilon(1e-12));
  CHECK(v[4] == doctest::Approx(std::sin(7.0 * p.lon)).epsilon(1e-12));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(encode_location({1, 1}, 0, 100.0), Error);
  CHECK_THROWS_AS(encode_location({1, 1}, 7, 100.0), Error);  // d must be even
  CHECK_THROWS_AS(encode_location({1, 1}, 128, 0.0), Error);
}
