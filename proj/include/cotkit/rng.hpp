#pragma once

#include <cstdint>
#include <random>

namespace cotkit {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Stream tags for derive_seed. Values are part of the on-disk reproducibility
// contract: changing one changes every generated dataset.
inline constexpr std::uint64_t kTagTrain = 0x747261696eULL;     // "train"
inline constexpr std::uint64_t kTagEval = 0x6576616cULL;        // "eval"
inline constexpr std::uint64_t kTagGradient = 0x67726164ULL;    // "grad"
inline constexpr std::uint64_t kTagAttention = 0x726f7065ULL;   // "rope"

/// Counter-based stream derivation:
///   h = splitmix64(seed ^ splitmix64(tag ^ splitmix64(index ^ splitmix64(attempt))))
/// The result depends only on its arguments, so records can be generated in
/// any order or on any number of threads.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index,
                          std::uint64_t attempt = 0) noexcept;

/// Seeded generator with portable distributions. std::mt19937_64's output
/// sequence is fixed by the standard; the <random> distributions are not,
/// so bounded integers, uniforms and normals are derived here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [lo, hi], unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    bool bernoulli(double p) { return uniform01() < p; }

    /// Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cotkit
