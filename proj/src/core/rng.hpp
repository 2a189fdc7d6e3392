#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace procl {

// Deterministic RNG with named substreams.
//
// Every random draw in a run descends from one root seed. A substream is
// addressed by (root_seed, name, i0, i1, i2); the address is hashed with
// FNV-1a into the mt19937_64 seed. mt19937_64 is fully specified by the
// standard, and the uniform/normal transforms below are hand-rolled, so
// identical seeds give identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    static Rng substream(std::uint64_t root_seed, std::string_view name, std::uint64_t i0 = 0,
                         std::uint64_t i1 = 0, std::uint64_t i2 = 0);

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive on both ends; rejection sampling, no modulo bias.
    int uniform_int(int lo, int hi);

    // Standard normal via Box-Muller. Two uniforms per draw, no cached spare.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::mt19937_64 gen_;
};

}  // namespace procl
