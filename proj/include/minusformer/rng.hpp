#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace minusformer {

/// Counter-based generator: the k-th draw is splitmix64(seed + (k+1)·γ) with
/// γ = 0x9E3779B97F4A7C15. Every derived quantity (uniform doubles, normals,
/// integer ranges, shuffles) is computed here rather than through <random>
/// distributions so that a seed yields the same stream on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() noexcept;

    /// Uniform integer in [0, n), rejection-sampled so it is unbiased.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Fisher-Yates shuffle driven by below().
    void shuffle(std::span<std::size_t> items) noexcept;

    /// Independent child stream; children with different keys do not overlap
    /// in practice because the child seed is itself mixed.
    SeededRng derive(std::uint64_t key) const noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace minusformer
