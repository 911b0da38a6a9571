#pragma once
// Special-function and quadrature kernels for the reversible-binding
// channel model: log-scaled modified Bessel functions of the first kind,
// Skellam (Poisson-difference) counting distributions, and adaptive
// semi-infinite integration of oscillatory and smooth integrands.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace mcdf {

// Difference of two independent Poisson counts with means lambda1, lambda2.
// lambda2 == 0 degenerates to plain Poisson(lambda1); lambda1 == 0 to a
// negated Poisson(lambda2); both zero to a point mass at 0.
struct SkellamDist {
    double lambda1 = 0.0;  // mean count of the additive component
    double lambda2 = 0.0;  // mean count of the subtractive component

    void validate() const;
    double mean() const { return lambda1 - lambda2; }
    double variance() const { return lambda1 + lambda2; }
};

// ln I_m(x) for integer order m >= 0 and x >= 0. Computed from the
// ascending series with the dominant term factored out, so it neither
// overflows nor loses precision for x up to ~1e4 and orders up to ~1e4.
// I_m(0) = 0 for m >= 1, so the log is -infinity there.
double log_bessel_i(int order, double x);

// Pr{N = m} for N ~ Skellam(lambda1, lambda2), evaluated in log space.
double skellam_pmf(std::int64_t m, const SkellamDist& dist);

// Pr{N <= m}. Tail truncation at mean +/- 12 sigma keeps the neglected
// mass below 1e-12, which is far under the error rates of interest.
double skellam_cdf(std::int64_t m, const SkellamDist& dist);

// Integer window [lo, hi] outside of which the PMF mass is < 1e-12 total.
std::pair<std::int64_t, std::int64_t> skellam_window(const SkellamDist& dist);

// Integrand treatment on (0, inf):
//   OscillatorySin : integral of f(z) * sin(z)/z
//   OscillatoryCos : integral of f(z) * cos(z)
//   Smooth         : integral of f(z)
enum class IntegrandKind { OscillatorySin, OscillatoryCos, Smooth };

struct QuadratureOptions {
    double tol = 1e-9;         // absolute accuracy target
    int max_panels = 20000;    // half-period panels before giving up
    int max_refine = 400;      // bisections per panel or segment
    double origin_scale = 0.0; // structure scale near 0 (0 = none); seeds an
                               // octave mesh so narrow boundary layers are
                               // not missed by the first error estimates
};

// Thrown when the panel/segment budget runs out before the tolerance is
// met. Carries the best estimate so callers can decide to keep it.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double best, double err)
        : std::runtime_error(what), best_estimate(best), achieved_error(err) {}
    double best_estimate;
    double achieved_error;
};

// Integrates f against the kernel selected by `kind` over (0, inf).
// Oscillatory kinds sum half-period panels [k*pi, (k+1)*pi] and accelerate
// the alternating partial sums by iterated averaging; the smooth kind
// extends the upper limit until the running segment contribution falls
// below tol/10 of the accumulated total.
double integrate_semi_infinite(const std::function<double(double)>& f,
                               IntegrandKind kind,
                               const QuadratureOptions& opt);

inline double integrate_semi_infinite(const std::function<double(double)>& f,
                                      IntegrandKind kind, double tol) {
    QuadratureOptions opt;
    opt.tol = tol;
    return integrate_semi_infinite(f, kind, opt);
}

}  // namespace mcdf
