#include "minusformer/rng.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace minusformer {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t SeededRng::next_u64() noexcept {
    ++counter_;
    return splitmix64(seed_ + counter_ * kGolden);
}

double SeededRng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t SeededRng::below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    // reject the top partial bucket
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

void SeededRng::shuffle(std::span<std::size_t> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(below(i));
        std::swap(items[i - 1], items[j]);
    }
}

SeededRng SeededRng::derive(std::uint64_t key) const noexcept {
    return SeededRng(splitmix64(seed_ ^ splitmix64(key + 0xD1B54A32D192ED03ULL)));
}

}  // namespace minusformer
