#pragma once

// Platform-stable hashing and random draws. Standard distributions are
// implementation-defined, so doubles are built from raw mt19937_64 output.

#include <cstdint>
#include <random>
#include <string_view>

namespace geoprobe {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

// SplitMix64 finaliser; a bijective bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on {0, ..., n-1}; n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace geoprobe
