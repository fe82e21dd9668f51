#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace alertpred {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Derives an independent sub-seed from a master seed and a stage label, so
// one master seed reproduces clustering, HMM init and sampling together.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

// Thin wrapper over mt19937_64. Draws are computed from raw engine output
// rather than std distributions so sequences do not depend on the standard
// library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1].
  double uniform_open_low() noexcept { return 1.0 - uniform(); }

  // Index drawn proportionally to non-negative weights. Returns the last
  // index with positive weight if rounding runs past the total.
  std::size_t categorical(std::span<const double> weights) noexcept;

 private:
  std::mt19937_64 engine_;
};

}  // namespace alertpred
