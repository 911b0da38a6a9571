#include "mcdf/channel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <numbers>
#include <unordered_map>

namespace mcdf {

namespace {

constexpr double kPi = std::numbers::pi;

std::atomic<long> g_clamp_count{0};

void warn_clamp(double psi, double t) {
    const long n = g_clamp_count.fetch_add(1) + 1;
    if (n <= 5)
        std::fprintf(stderr,
                     "mcdf: psi = %.3e at t = %.6g clamped into [0, 1] "
                     "(quadrature noise)\n",
                     psi, t);
}

struct PsiKey {
    double vals[7];
    bool operator==(const PsiKey& o) const {
        return std::memcmp(vals, o.vals, sizeof vals) == 0;
    }
};

struct PsiKeyHash {
    size_t operator()(const PsiKey& k) const {
        // FNV-1a over the raw bytes; keys are bit-exact doubles.
        const unsigned char* p = reinterpret_cast<const unsigned char*>(k.vals);
        size_t h = 1469598103934665603ull;
        for (size_t i = 0; i < sizeof k.vals; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
        return h;
    }
};

std::mutex g_psi_mutex;
std::unordered_map<PsiKey, double, PsiKeyHash> g_psi_cache;

}  // namespace

void ReceiverKinetics::validate() const {
    if (!(radius > 0.0)) throw std::domain_error("receiver radius must be > 0");
    if (!(k_on >= 0.0)) throw std::domain_error("k_on must be >= 0");
    if (!(k_off >= 0.0)) throw std::domain_error("k_off must be >= 0");
}

double ReceiverKinetics::surface_area() const {
    return 4.0 * kPi * radius * radius;
}

void HopChannel::validate() const {
    receiver.validate();
    if (!(diffusion > 0.0))
        throw std::domain_error("diffusion coefficient must be > 0");
    if (!(distance > receiver.radius))
        throw std::domain_error(
            "transmit distance must exceed the receiver radius");
}

void SlotContext::validate() const {
    if (bits.empty()) throw std::domain_error("bit sequence must be nonempty");
    if (slot_index < 1 || slot_index > static_cast<int>(bits.size()))
        throw std::domain_error("slot_index must lie within the bit sequence");
    if (!(emission >= 0.0)) throw std::domain_error("emission must be >= 0");
    if (!(bit_interval > 0.0))
        throw std::domain_error("bit_interval must be > 0");
    for (int b : bits)
        if (b != 0 && b != 1)
            throw std::domain_error("bits must be 0 or 1");
}

std::complex<double> u_transform(double w, const HopChannel& hop) {
    if (!(w > 0.0)) throw std::domain_error("u_transform: w must be > 0");
    hop.validate();
    const double D = hop.diffusion;
    const double d = hop.distance;
    const double r = hop.receiver.radius;
    const std::complex<double> jw(0.0, w);
    const std::complex<double> s = std::sqrt(jw / D);
    const std::complex<double> kinetic =
        hop.receiver.k_on * jw / (D * (jw + hop.receiver.k_off));
    const std::complex<double> denom = 1.0 / r + kinetic + s;
    return (1.0 - s / denom) * std::exp(-(d - r) * s) / (4.0 * kPi * d * D);
}

double binding_response(double t, const HopChannel& hop, double tol) {
    if (!(t > 0.0)) throw std::domain_error("binding_response: t must be > 0");
    if (!(tol > 0.0))
        throw std::domain_error("binding_response: tol must be > 0");
    hop.validate();

    const double r = hop.receiver.radius;
    const double D = hop.diffusion;
    const double scale = 4.0 * r * D;
    // The three integrals are summed and multiplied by `scale`; split the
    // requested absolute tolerance accordingly.
    QuadratureOptions opt;
    opt.tol = std::max(tol / (6.0 * scale), 1e-14);
    // The transform decays once (d - r) sqrt(w / 2D) exceeds O(1), i.e. for
    // z beyond t * 2D / (d - r)^2. For small t that layer sits far below
    // the first half-period panel; hint the quadrature about it.
    const double gap = hop.distance - r;
    opt.origin_scale = std::min(t * 2.0 * D / (gap * gap), 1.0);

    double i_sin, i_cos, i_static;
    try {
        i_sin = integrate_semi_infinite(
            [&](double z) { return u_transform(z / t, hop).real(); },
            IntegrandKind::OscillatorySin, opt);
        i_cos = integrate_semi_infinite(
            [&](double z) { return u_transform(z / t, hop).imag() / z; },
            IntegrandKind::OscillatoryCos, opt);
        // Third term: integral over w of Im[U(w)]/w. With w = u^2 the
        // integrand 2 Im[U(u^2)]/u is analytic at u = 0 (Im U ~ -c sqrt(w)).
        QuadratureOptions opt3 = opt;
        opt3.origin_scale = std::min(std::sqrt(2.0 * D) / gap, 0.5);
        i_static = integrate_semi_infinite(
            [&](double u) {
                if (u == 0.0) return 0.0;
                return 2.0 * u_transform(u * u, hop).imag() / u;
            },
            IntegrandKind::Smooth, opt3);
    } catch (const QuadratureError& e) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "binding_response(t=%.6g, d=%.6g, r=%.6g, D=%.6g, "
                      "k_on=%.6g, k_off=%.6g): %s",
                      t, hop.distance, r, D, hop.receiver.k_on,
                      hop.receiver.k_off, e.what());
        throw QuadratureError(buf, e.best_estimate, e.achieved_error);
    }

    double psi = scale * (i_sin + i_cos - i_static);
    const double slack = 10.0 * tol;
    if (psi < -slack || psi > 1.0 + slack) {
        char buf[192];
        std::snprintf(buf, sizeof buf,
                      "binding_response: psi = %.6e outside [0, 1] beyond "
                      "tolerance at t = %.6g (d=%.6g, k_on=%.6g, k_off=%.6g)",
                      psi, t, hop.distance, hop.receiver.k_on,
                      hop.receiver.k_off);
        throw std::runtime_error(buf);
    }
    if (psi < 0.0 || psi > 1.0) {
        warn_clamp(psi, t);
        psi = std::clamp(psi, 0.0, 1.0);
    }
    return psi;
}

double binding_response_cached(double t, const HopChannel& hop, double tol) {
    const PsiKey key{{hop.diffusion, hop.distance, hop.receiver.radius,
                      hop.receiver.k_on, hop.receiver.k_off, t, tol}};
    {
        std::lock_guard<std::mutex> lock(g_psi_mutex);
        auto it = g_psi_cache.find(key);
        if (it != g_psi_cache.end()) return it->second;
    }
    const double psi = binding_response(t, hop, tol);
    std::lock_guard<std::mutex> lock(g_psi_mutex);
    return g_psi_cache.emplace(key, psi).first->second;
}

std::pair<double, double> mean_bound_pair(const SlotContext& ctx,
                                          const HopChannel& hop, double tol) {
    ctx.validate();
    hop.validate();
    const int n = ctx.slot_index;
    const double tb = ctx.bit_interval;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    for (int i = 1; i <= n; ++i) {
        if (ctx.bits[i - 1] == 0 || ctx.emission == 0.0) continue;
        lambda1 += ctx.emission *
                   binding_response_cached((n - i + 1) * tb, hop, tol);
        if (i <= n - 1)
            lambda2 +=
                ctx.emission * binding_response_cached((n - i) * tb, hop, tol);
    }
    return {lambda1, lambda2};
}

SkellamDist slot_count_distribution(const SlotContext& ctx,
                                    const HopChannel& hop, double tol) {
    const auto [l1, l2] = mean_bound_pair(ctx, hop, tol);
    return SkellamDist{l1, l2};
}

long psi_clamp_count() { return g_clamp_count.load(); }

}  // namespace mcdf
