#include "sfpe/rng.hpp"

#include <cmath>

namespace sfpe {

namespace {

constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;  // golden ratio
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;  // sqrt(3) - 1

// Counter-word tags separating draw domains within one stream.
constexpr std::uint64_t kDomainNormal = 0x01;
constexpr std::uint64_t kDomainUniform = 0x02;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace

std::array<std::uint64_t, 4> Philox4x64::block(std::array<std::uint64_t, 4> counter,
                                               std::array<std::uint64_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint64_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, counter[0], hi0, lo0);
        mulhilo(kPhiloxM1, counter[2], hi1, lo1);
        counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
    }
    return counter;
}

double inverse_normal_cdf(double u) {
    // Wichura's PPND16 (algorithm AS 241): full double precision from rational
    // approximations alone, no transcendental refinement in the central range.
    const double q = u - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) *
                        r +
                    4.5921953931549871457e+4) *
                       r +
                   1.3731693765509461125e+4) *
                      r +
                  1.9715909503065514427e+3) *
                     r +
                 1.3314166789178437745e+2) *
                    r +
                3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) *
                        r +
                    2.1213794301586595867e+4) *
                       r +
                   5.3941960214247511077e+3) *
                      r +
                  6.8718700749205790830e+2) *
                     r +
                 4.2313330701600911252e+1) *
                    r +
                1.0);
    }
    double r = q < 0.0 ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) *
                     r +
                 1.27045825245236838258e+0) *
                    r +
                3.64784832476320460504e+0) *
                   r +
               5.76949722146069140550e+0) *
                  r +
              4.63033784615654529590e+0) *
                 r +
             1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) *
                     r +
                 1.48103976427480074590e-1) *
                    r +
                6.89767334985100004550e-1) *
                   r +
               1.67638483018380384940e+0) *
                  r +
              2.05319162663775882187e+0) *
                 r +
             1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) *
                     r +
                 2.65321895265761230930e-2) *
                    r +
                2.96560571828504891230e-1) *
                   r +
               1.78482653991729133580e+0) *
                  r +
              5.46378491116411436990e+0) *
                 r +
             6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) *
                     r +
                 7.86869131145613259100e-4) *
                    r +
                1.48753612908506148525e-2) *
                   r +
               1.36929880922735805310e-1) *
                  r +
              5.99832206555887937690e-1) *
                 r +
             1.0);
    }
    return q < 0.0 ? -x : x;
}

RngStream::RngStream(std::uint64_t seed)
    : key_{seed, 0x243F6A8885A308D3ull} {}  // pi fraction bits as root salt

RngStream RngStream::split(std::uint64_t tag, std::uint64_t a, std::uint64_t b) const {
    auto out = Philox4x64::block({tag, a, b, 0x53504C4954ull /* "SPLIT" */}, key_);
    return RngStream(std::array<std::uint64_t, 2>{out[0], out[1]});
}

std::uint64_t RngStream::raw_in_domain(std::uint64_t domain, std::uint64_t index,
                                        std::uint64_t channel) const {
    auto out =
        Philox4x64::block({domain, index >> 2, channel, 0x44524157ull /* "DRAW" */}, key_);
    return out[index & 3];
}

std::uint64_t RngStream::raw(std::uint64_t index) const {
    return raw_in_domain(kDomainUniform, index);
}

namespace {
inline double bits_to_unit_open(std::uint64_t bits) {
    // 53 significant bits, offset to land strictly inside (0, 1).
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}
}  // namespace

double RngStream::uniform(std::uint64_t index) const {
    return bits_to_unit_open(raw_in_domain(kDomainUniform, index));
}

double RngStream::normal(std::uint64_t index) const {
    return inverse_normal_cdf(bits_to_unit_open(raw_in_domain(kDomainNormal, index)));
}

void RngStream::fill_normals(std::uint64_t base, std::span<double> out,
                             std::uint64_t channel) const {
    std::size_t i = 0;
    while (i < out.size()) {
        const std::uint64_t index = base + i;
        const auto block =
            Philox4x64::block({kDomainNormal, index >> 2, channel, 0x44524157ull}, key_);
        std::uint64_t lane = index & 3;
        while (lane < 4 && i < out.size()) {
            out[i++] = inverse_normal_cdf(bits_to_unit_open(block[lane++]));
        }
    }
}

}  // namespace sfpe
