#pragma once
// Small deterministic RNG kit for the particle simulator: splitmix64 for
// seed derivation, xoshiro256++ streams, and cached-polar gaussians.
// Every molecule gets its own stream derived from (seed, snapshot, species,
// slot, index), so results are bit-identical for any worker count.

#include <cstdint>
#include <cmath>

namespace mcdf {

// splitmix64 output finalizer: a bijective 64-bit avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    return mix64(state += 0x9e3779b97f4a7c15ull);
}

// Hash-combine a seed with stream coordinates. Every coordinate passes
// through a full avalanche before the next is folded in; a plain xor/add
// chain would alias streams whose coordinates differ in compensating ways.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0,
                                   std::uint64_t d = 0) {
    std::uint64_t h = seed + 0x9e3779b97f4a7c15ull;
    h = mix64(h + 0x9e3779b97f4a7c15ull + a);
    h = mix64(h + 0xd1b54a32d192ed03ull + b);
    h = mix64(h + 0x8bb84b93962eacc9ull + c);
    h = mix64(h + 0x2545f4914f6cdd1dull + d);
    return h;
}

class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed = 1) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    std::uint32_t next32() { return static_cast<std::uint32_t>(next() >> 32); }

    // Standard normal via the Marsaglia-Tsang ziggurat (128 layers).
    double gaussian() {
        for (;;) {
            const std::int32_t hz = static_cast<std::int32_t>(next32());
            const std::uint32_t iz = static_cast<std::uint32_t>(hz) & 127u;
            const std::uint32_t mag =
                hz < 0 ? static_cast<std::uint32_t>(
                             -static_cast<std::int64_t>(hz))
                       : static_cast<std::uint32_t>(hz);
            const Zig& z = zig_tables();
            if (mag < z.kn[iz]) return hz * z.wn[iz];
            if (iz == 0) {  // tail beyond the base strip
                double x, y;
                do {
                    x = -std::log(nonzero_uniform()) / kZigR;
                    y = -std::log(nonzero_uniform());
                } while (y + y < x * x);
                return hz > 0 ? kZigR + x : -(kZigR + x);
            }
            const double x = hz * z.wn[iz];
            if (z.fn[iz] + uniform() * (z.fn[iz - 1] - z.fn[iz]) <
                std::exp(-0.5 * x * x))
                return x;
        }
    }

    // Exponential with the given rate (> 0).
    double exponential(double rate) {
        return -std::log(1.0 - uniform()) / rate;
    }

private:
    static constexpr double kZigR = 3.442619855899;

    struct Zig {
        std::uint32_t kn[128];
        double wn[128];
        double fn[128];
        Zig() {
            const double m1 = 2147483648.0;
            double dn = kZigR, tn = kZigR;
            const double vn = 9.91256303526217e-3;
            const double q = vn / std::exp(-0.5 * dn * dn);
            kn[0] = static_cast<std::uint32_t>((dn / q) * m1);
            kn[1] = 0;
            wn[0] = q / m1;
            wn[127] = dn / m1;
            fn[0] = 1.0;
            fn[127] = std::exp(-0.5 * dn * dn);
            for (int i = 126; i >= 1; --i) {
                dn = std::sqrt(
                    -2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
                kn[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
                tn = dn;
                fn[i] = std::exp(-0.5 * dn * dn);
                wn[i] = dn / m1;
            }
        }
    };

    static const Zig& zig_tables() {
        static const Zig tables;
        return tables;
    }

    double nonzero_uniform() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

}  // namespace mcdf
