#include "dictcert/rng.hpp"

#include <cmath>
#include <numbers>

namespace dictcert {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x3c6ef372fe94f82bULL));
}

uint64_t Rng::next_u64() {
  uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * 0xd1b54a32d192ed03ULL + 1));
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

uint64_t Rng::below(uint64_t bound) {
  // Rejection sampling removes modulo bias.
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % bound;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

}  // namespace dictcert
