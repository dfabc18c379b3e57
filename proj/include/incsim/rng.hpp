#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace incsim {

/// Philox4x32-10 block function (Salmon et al., Random123).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// Counter-based 64-bit generator: the seed is the Philox key and output i is a pure
/// function of (seed, i). Satisfies UniformRandomBitGenerator.
class CounterRng {
  public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (cached_) {
            cached_ = false;
            return spare_;
        }
        const auto block = philox4x32({static_cast<std::uint32_t>(counter_),
                                       static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                                      key_);
        ++counter_;
        spare_ = (static_cast<std::uint64_t>(block[3]) << 32) | block[2];
        cached_ = true;
        return (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) noexcept {
        const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
        // Lemire's multiply-shift; the bias for spans this small is below 2^-40.
        const auto wide = static_cast<unsigned __int128>((*this)()) * span;
        return lo + static_cast<int>(static_cast<std::uint64_t>(wide >> 64));
    }

    std::uint64_t blocks_consumed() const noexcept { return counter_; }

  private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t counter_ = 0;
    std::uint64_t spare_ = 0;
    bool cached_ = false;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of stream `index` under `master`; used for replicate seeds.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    }
    return derive_seed(master, h);
}

} // namespace incsim
