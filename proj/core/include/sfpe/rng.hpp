#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace sfpe {

/// Philox-4x64 block cipher, 10 rounds. Stateless: a 256-bit counter and a
/// 128-bit key map to 256 bits of output, so any (key, counter) pair can be
/// regenerated from anywhere, on any thread, in any order.
struct Philox4x64 {
    static std::array<std::uint64_t, 4> block(std::array<std::uint64_t, 4> counter,
                                              std::array<std::uint64_t, 2> key);
};

/// Inverse standard-normal CDF, accurate to full double precision
/// (rational approximation plus one Halley refinement against erfc).
double inverse_normal_cdf(double u);

/// A keyed, counter-based random stream.
///
/// A stream is identified by a 128-bit key derived from the seed and the
/// chain of splits that produced it. Draws are pure functions of
/// (key, draw index): identical (seed, split chain, index) give identical
/// variates independent of thread scheduling, and distinct chains give
/// statistically independent streams.
///
/// The named splits (replication / level / path / step) carry distinct
/// domain tags, so e.g. level(3).path(5) and path(3).level(5) never collide.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    RngStream replication(std::uint64_t r) const { return split(kTagReplication, r, 0); }
    RngStream level(std::uint64_t l) const { return split(kTagLevel, l, 0); }
    RngStream path(std::uint64_t i) const { return split(kTagPath, i, 0); }
    RngStream step(std::uint64_t s) const { return split(kTagStep, s, 0); }
    /// Generic two-index derivation for uses not covered by the named splits.
    RngStream branch(std::uint64_t a, std::uint64_t b = 0) const { return split(kTagBranch, a, b); }

    /// Raw 64 uniform bits for draw `index`.
    std::uint64_t raw(std::uint64_t index) const;
    /// Uniform draw, strictly inside (0, 1).
    double uniform(std::uint64_t index) const;
    /// Standard normal draw via inverse CDF; exactly one uniform per normal,
    /// from a counter domain disjoint from uniform()'s.
    double normal(std::uint64_t index) const;
    /// Normals for indices [base, base + out.size()), sharing cipher blocks
    /// across lanes of four. `channel` selects an independent index space,
    /// letting batched sub-samplers draw under a node's key without
    /// colliding with the node's own draws.
    void fill_normals(std::uint64_t base, std::span<double> out,
                      std::uint64_t channel = 0) const;

    std::array<std::uint64_t, 2> key() const noexcept { return key_; }

private:
    RngStream(std::array<std::uint64_t, 2> key) : key_(key) {}

    RngStream split(std::uint64_t tag, std::uint64_t a, std::uint64_t b) const;
    std::uint64_t raw_in_domain(std::uint64_t domain, std::uint64_t index,
                                std::uint64_t channel = 0) const;

    static constexpr std::uint64_t kTagReplication = 1;
    static constexpr std::uint64_t kTagLevel = 2;
    static constexpr std::uint64_t kTagPath = 3;
    static constexpr std::uint64_t kTagStep = 4;
    static constexpr std::uint64_t kTagBranch = 5;

    std::array<std::uint64_t, 2> key_;
};

}  // namespace sfpe
