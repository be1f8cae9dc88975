#pragma once

#include <cstdint>

namespace dictcert {

// 64-bit finalizer from SplitMix64.
uint64_t mix64(uint64_t x);

// Seed for the i-th child of a master seed. Used to give every trial, cell
// and column its own stream, independent of scheduling.
uint64_t derive_seed(uint64_t master, uint64_t index);

// Counter-based generator: output i is a hash of (key, i). Cheap to copy and
// to split, and the sequence depends only on the key.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  // Independent child stream.
  Rng split(uint64_t stream) const { return Rng(derive_seed(key_, stream)); }

  uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double uniform();
  // Uniform integer in [0, bound).
  uint64_t below(uint64_t bound);
  double normal();

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dictcert
