#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace uavbeam {

// Stateless 64-bit mixer, used to derive independent seeds for named streams.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Deterministic RNG wrapper. The distribution transforms are implemented here
// (not via std::*_distribution) so that a given seed always yields the same
// value sequence regardless of standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0,n)
  std::int64_t uniform_int(std::int64_t n);

  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for config hashes and checkpoint payload checksums.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t v);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
// Hex float form, exact round trip, used in checkpoint headers.
std::string format_double_hex(double v);
double parse_double(std::string_view s);          // throws ParseError
double parse_double_hex(std::string_view s);      // throws ParseError
std::int64_t parse_int(std::string_view s);       // throws ParseError

std::vector<std::string> split_string(const std::string& line, char sep);

}  // namespace uavbeam
