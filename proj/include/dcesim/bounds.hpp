#pragma once

// Closed-form counting bounds of both constructions. Values saturate at
// UINT64_MAX instead of overflowing.

#include <cstdint>
#include <limits>

namespace dcesim::bounds
{

inline constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

constexpr std::uint64_t pow2(std::uint64_t n)
{
    return n >= 64 ? kSaturated : (std::uint64_t{1} << n);
}

constexpr std::uint64_t sat_add(std::uint64_t a, std::uint64_t b)
{
    return a > kSaturated - b ? kSaturated : a + b;
}

/// Initializations of the strategy at combined index k (P_e -> 2e, N_e -> 2e+1).
constexpr std::uint64_t injury(std::uint64_t k)
{
    const auto p = pow2(k);
    return p == kSaturated ? kSaturated : p - 1;
}

/// |dom Upsilon| of L_e per epoch.
constexpr std::uint64_t upsilon_dom(std::uint64_t e) { return pow2(e); }

/// g(e) = 1 + initializations of L_e.
constexpr std::uint64_t g(std::uint64_t e) { return pow2(e * (e + 1) / 2 + e); }

/// h(e) = 1 + initializations of R_e.
constexpr std::uint64_t h(std::uint64_t e) { return pow2((e + 1) * (e + 2) / 2 + e); }

/// Enumerations of d_{e,y}, y <= x, per epoch of R_e; k = floor(x/2).
constexpr std::uint64_t p(std::uint64_t e, std::uint64_t x)
{
    const std::uint64_t k = x / 2;
    const auto hi = pow2(e + k + 1);
    if (hi == kSaturated) return kSaturated;
    return sat_add(hi - pow2(e), k);
}

/// Delta(e, .) changes within an initialization-free window of L_e.
constexpr std::uint64_t delta_flips(std::uint64_t dom) { return dom >= kSaturated / 2 ? kSaturated : 2 * (dom + 1); }

static_assert(injury(0) == 0 && injury(3) == 7 && injury(5) == 31);
static_assert(upsilon_dom(3) == 8);
static_assert(g(2) == 32);
static_assert(h(1) == 16);
static_assert(p(0, 2) == 4);

} // namespace dcesim::bounds
