#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cityfm {

// Runtime failure in parsing, validation or numerics. The CLI maps this to
// exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parse failure carrying the byte offset (XML) or line number (JSON lines)
// it was detected at. The position is also embedded in the message.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t where)
      : Error(what), position(where) {}
  std::size_t position;
};

// Deterministic random source. The engine is mt19937_64, whose output
// sequence is fixed by the standard; all value mappings are implemented here
// so results do not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 bits of randomness.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller, one spare cached.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  // k distinct indices drawn from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Shortest decimal string that round-trips the exact double value.
std::string fmt_double(double v);

// Fixed-precision formatting (printf %.*f), used for human-facing output.
std::string fmt_fixed(double v, int precision);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);

std::string to_lower(std::string_view s);

// Minimal CSV support: quoted fields, embedded commas/quotes, LF and CRLF.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view raw);

// Horizontal bar chart of labelled values in [-1, 1], written as standalone
// SVG. Used for the similarity analysis output.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& rows);

}  // namespace cityfm
