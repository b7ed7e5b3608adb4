#include "ffrr/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ffrr/errors.hpp"
#include "ffrr/hashing.hpp"

namespace ffrr {

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InputError("Rng::index: empty range");
  const std::uint64_t range = n;
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw InputError("corrupt rng state");
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t a,
                          std::string_view tag) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ fnv1a64(purpose));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ fnv1a64(tag));
  return s;
}

}  // namespace ffrr
