#include "core/rng.hpp"

#include <atomic>
#include <cmath>

#include "core/common.hpp"

namespace procl {

namespace {

std::atomic<double> g_eps{1e-8};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

double clamp_epsilon() { return g_eps.load(std::memory_order_relaxed); }
void set_clamp_epsilon(double eps) { g_eps.store(eps, std::memory_order_relaxed); }

Rng Rng::substream(std::uint64_t root_seed, std::string_view name, std::uint64_t i0,
                   std::uint64_t i1, std::uint64_t i2) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, &root_seed, sizeof(root_seed));
    h = fnv1a(h, name.data(), name.size());
    h = fnv1a(h, &i0, sizeof(i0));
    h = fnv1a(h, &i1, sizeof(i1));
    h = fnv1a(h, &i2, sizeof(i2));
    return Rng(h);
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw Error(cat("Rng::uniform_int: empty range [", lo, ",", hi, "]"));
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t u;
    do {
        u = next_u64();
    } while (u >= limit);
    return lo + static_cast<int>(u % span);
}

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace procl
