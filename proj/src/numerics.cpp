#include "mcdf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace mcdf {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 15-point Kronrod rule with embedded 7-point Gauss (QUADPACK QK15).
constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct PanelResult {
    double value;
    double error;
};

PanelResult gauss_kronrod_15(const std::function<double(double)>& f, double a,
                             double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double fv[15];
    for (int i = 0; i < 7; ++i) {
        fv[i] = f(center - half * kKronrodNodes[i]);
        fv[14 - i] = f(center + half * kKronrodNodes[i]);
    }
    fv[7] = f(center);

    double kronrod = 0.0;
    double resabs = 0.0;
    for (int i = 0; i < 7; ++i) {
        kronrod += kKronrodWeights[i] * (fv[i] + fv[14 - i]);
        resabs += kKronrodWeights[i] * (std::abs(fv[i]) + std::abs(fv[14 - i]));
    }
    kronrod += kKronrodWeights[7] * fv[7];
    resabs += kKronrodWeights[7] * std::abs(fv[7]);

    // Gauss points are the odd-indexed Kronrod nodes.
    double gauss = kGaussWeights[3] * fv[7];
    for (int i = 0; i < 3; ++i)
        gauss += kGaussWeights[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);

    // QUADPACK-style error estimate: the |K - G| difference sharpened
    // against resasc, the rule applied to |f - mean|. Without the resasc
    // scale the sharpening wildly underestimates near singular points.
    const double mean = 0.5 * kronrod;
    double resasc = kKronrodWeights[7] * std::abs(fv[7] - mean);
    for (int i = 0; i < 7; ++i)
        resasc += kKronrodWeights[i] *
                  (std::abs(fv[i] - mean) + std::abs(fv[14 - i] - mean));
    kronrod *= half;
    gauss *= half;
    resabs *= std::abs(half);
    resasc *= std::abs(half);
    double err = std::abs(kronrod - gauss);
    if (resasc != 0.0 && err != 0.0)
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    const double eps = std::numeric_limits<double>::epsilon();
    err = std::max(err, 50.0 * eps * resabs);
    return {kronrod, err};
}

// Globally adaptive integration over the sorted breakpoints in `mesh`:
// repeatedly bisect the subinterval with the largest error estimate.
// Integrable endpoint singularities just concentrate the splits; they
// cannot trigger exponential subdivision.
double adaptive_mesh(const std::function<double(double)>& f,
                     const std::vector<double>& mesh, double tol,
                     int max_splits) {
    struct Piece {
        double a, b, value, error;
        bool operator<(const Piece& o) const { return error < o.error; }
    };
    std::priority_queue<Piece> queue;
    double total_value = 0.0;
    double total_error = 0.0;
    for (size_t i = 0; i + 1 < mesh.size(); ++i) {
        const PanelResult r = gauss_kronrod_15(f, mesh[i], mesh[i + 1]);
        queue.push({mesh[i], mesh[i + 1], r.value, r.error});
        total_value += r.value;
        total_error += r.error;
    }
    double stuck_error = 0.0;  // error on intervals too narrow to bisect
    for (int i = 0; i < max_splits && total_error - stuck_error > tol; ++i) {
        if (queue.empty()) break;
        Piece worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a) || !(mid < worst.b)) {
            // Interval narrower than the float grid; park it.
            stuck_error += worst.error;
            continue;
        }
        const PanelResult left = gauss_kronrod_15(f, worst.a, mid);
        const PanelResult right = gauss_kronrod_15(f, mid, worst.b);
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        queue.push({worst.a, mid, left.value, left.error});
        queue.push({mid, worst.b, right.value, right.error});
    }
    return total_value;
}

double adaptive_panel(const std::function<double(double)>& f, double a,
                      double b, double tol, int max_splits) {
    return adaptive_mesh(f, {a, b}, tol, max_splits);
}

// Octave mesh spanning [a, b] around a caller-provided structure scale, so
// the initial error estimates see boundary layers much narrower than the
// interval. Covers scale * 2^-40 up to b.
std::vector<double> octave_mesh(double a, double b, double scale) {
    std::vector<double> mesh;
    mesh.push_back(a);
    if (scale > 0.0) {
        double p = scale * std::ldexp(1.0, -40);
        while (p < b) {
            if (p > a) mesh.push_back(p);
            p *= 2.0;
        }
    }
    mesh.push_back(b);
    return mesh;
}

// Sliding-window iterated averaging: the deepest element of the averaging
// triangle built on the most recent `window` partial sums. Equivalent to a
// binomial-weighted mean of those sums, which cancels an alternating tail
// while staying a convex combination (no roundoff blowup).
double window_average(const std::vector<double>& sums, size_t window) {
    const size_t n = std::min(window, sums.size());
    std::vector<double> buf(sums.end() - n, sums.end());
    for (size_t level = 1; level < n; ++level)
        for (size_t i = 0; i + level < n; ++i)
            buf[i] = 0.5 * (buf[i] + buf[i + 1]);
    return buf[0];
}

double integrate_oscillatory(const std::function<double(double)>& f,
                             bool sin_kernel, const QuadratureOptions& opt) {
    const double panel_tol = opt.tol / 10.0;
    auto integrand = [&](double z) {
        if (sin_kernel) {
            const double kernel = (z == 0.0) ? 1.0 : std::sin(z) / z;
            return f(z) * kernel;
        }
        return f(z) * std::cos(z);
    };

    constexpr size_t kWindow = 24;
    std::vector<double> partial_sums;
    partial_sums.reserve(256);
    double partial = 0.0;
    double prev_piece = std::numeric_limits<double>::infinity();
    double accel_prev = 0.0;
    int accel_settled = 0;
    for (int k = 0; k < opt.max_panels; ++k) {
        const double a = k * kPi;
        const double b = (k + 1) * kPi;
        double piece;
        if (k == 0) {
            piece = adaptive_mesh(integrand,
                                  octave_mesh(a, b, opt.origin_scale),
                                  panel_tol, opt.max_refine);
        } else {
            piece = adaptive_panel(integrand, a, b, panel_tol, opt.max_refine);
        }
        partial += piece;
        partial_sums.push_back(partial);

        // Envelope died: the remaining tail is bounded by the piece size.
        if (k >= 2 && std::abs(piece) <= 0.25 * opt.tol &&
            std::abs(prev_piece) <= 0.25 * opt.tol)
            return partial;

        // Slowly decaying alternating tail: average the recent partial sums.
        if (partial_sums.size() >= kWindow) {
            const double accel = window_average(partial_sums, kWindow);
            if (std::abs(accel - accel_prev) < 0.5 * opt.tol)
                ++accel_settled;
            else
                accel_settled = 0;
            if (accel_settled >= 3) return accel;
            accel_prev = accel;
        }
        prev_piece = piece;
    }
    throw QuadratureError(
        "oscillatory quadrature: panel budget exhausted before reaching "
        "tolerance",
        accel_prev, std::abs(accel_prev - partial));
}

double integrate_smooth(const std::function<double(double)>& f,
                        const QuadratureOptions& opt) {
    double total = 0.0;
    double a = 0.0;
    double width = 1.0;
    int negligible = 0;
    for (int seg = 0; seg < 200; ++seg) {
        const double b = a + width;
        double piece;
        if (seg == 0) {
            piece = adaptive_mesh(f, octave_mesh(a, b, opt.origin_scale),
                                  opt.tol / 10.0, opt.max_refine);
        } else {
            piece = adaptive_panel(f, a, b, opt.tol / 10.0, opt.max_refine);
        }
        total += piece;
        if (std::abs(piece) <= 0.1 * opt.tol * std::max(1.0, std::abs(total))) {
            if (++negligible >= 2) return total;
        } else {
            negligible = 0;
        }
        a = b;
        width *= 2.0;
    }
    throw QuadratureError(
        "smooth quadrature: upper truncation not reached within segment "
        "budget",
        total, std::abs(total));
}

double log1p_sum_of_terms(double x_half_sq, int m, std::int64_t k_peak) {
    // Sums the series terms relative to the peak term k_peak; returns
    // ln(sum of relative terms). All terms are positive.
    const double cutoff = 1e-19;
    double sum = 1.0;
    // downward from the peak
    double r = 1.0;
    for (std::int64_t k = k_peak; k > 0; --k) {
        r *= static_cast<double>(k) * static_cast<double>(m + k) / x_half_sq;
        if (r < cutoff * sum) break;
        sum += r;
    }
    // upward from the peak
    r = 1.0;
    for (std::int64_t k = k_peak;; ++k) {
        r *= x_half_sq /
             (static_cast<double>(k + 1) * static_cast<double>(m + k + 1));
        if (!(r > 0.0) || r < cutoff * sum) break;
        sum += r;
    }
    return std::log(sum);
}

}  // namespace

void SkellamDist::validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1) || !(lambda2 >= 0.0) ||
        !std::isfinite(lambda2))
        throw std::domain_error("SkellamDist: means must be finite and >= 0");
}

double log_bessel_i(int order, double x) {
    if (x < 0.0 || !std::isfinite(x))
        throw std::domain_error("log_bessel_i: x must be finite and >= 0");
    if (order < 0)
        throw std::domain_error(
            "log_bessel_i: order must be >= 0 (use I_{-m} = I_m)");
    if (x == 0.0)
        return order == 0 ? 0.0 : -std::numeric_limits<double>::infinity();

    const double half = 0.5 * x;
    const double q = half * half;
    // Peak term index k* solves k(k+m) = (x/2)^2.
    const double m = static_cast<double>(order);
    const double k_star_real = 0.5 * (-m + std::sqrt(m * m + 4.0 * q));
    const std::int64_t k_peak =
        std::max<std::int64_t>(0, static_cast<std::int64_t>(k_star_real));

    const double log_peak = (2.0 * static_cast<double>(k_peak) + m) *
                                std::log(half) -
                            std::lgamma(static_cast<double>(k_peak) + 1.0) -
                            std::lgamma(static_cast<double>(k_peak) + m + 1.0);
    return log_peak + log1p_sum_of_terms(q, order, k_peak);
}

double skellam_pmf(std::int64_t m, const SkellamDist& dist) {
    dist.validate();
    const double l1 = dist.lambda1;
    const double l2 = dist.lambda2;
    if (l1 == 0.0 && l2 == 0.0) return m == 0 ? 1.0 : 0.0;
    if (l2 == 0.0) {  // plain Poisson(l1) on m >= 0
        if (m < 0) return 0.0;
        const double dm = static_cast<double>(m);
        return std::exp(dm * std::log(l1) - l1 - std::lgamma(dm + 1.0));
    }
    if (l1 == 0.0) {  // negated Poisson(l2) on m <= 0
        if (m > 0) return 0.0;
        const double dm = static_cast<double>(-m);
        return std::exp(dm * std::log(l2) - l2 - std::lgamma(dm + 1.0));
    }
    const int abs_m =
        static_cast<int>(std::min<std::int64_t>(std::llabs(m), 1 << 30));
    const double log_ratio =
        0.5 * static_cast<double>(m) * (std::log(l1) - std::log(l2));
    const double log_p = -(l1 + l2) + log_ratio +
                         log_bessel_i(abs_m, 2.0 * std::sqrt(l1 * l2));
    if (log_p > 0.0) return 1.0;  // guard against rounding just above 0
    return std::exp(log_p);
}

std::pair<std::int64_t, std::int64_t> skellam_window(const SkellamDist& dist) {
    dist.validate();
    const double mu = dist.mean();
    const double sigma = std::sqrt(dist.variance());
    std::int64_t lo =
        static_cast<std::int64_t>(std::floor(mu - 12.0 * sigma)) - 3;
    std::int64_t hi =
        static_cast<std::int64_t>(std::ceil(mu + 12.0 * sigma)) + 3;
    if (dist.lambda2 == 0.0) lo = std::max<std::int64_t>(lo, 0);
    if (dist.lambda1 == 0.0) hi = std::min<std::int64_t>(hi, 0);
    return {lo, hi};
}

double skellam_cdf(std::int64_t m, const SkellamDist& dist) {
    const auto [lo, hi] = skellam_window(dist);
    if (m < lo) return 0.0;
    const std::int64_t top = std::min(m, hi);
    double sum = 0.0;
    for (std::int64_t k = lo; k <= top; ++k) sum += skellam_pmf(k, dist);
    return std::min(sum, 1.0);
}

double integrate_semi_infinite(const std::function<double(double)>& f,
                               IntegrandKind kind,
                               const QuadratureOptions& opt) {
    if (!(opt.tol > 0.0))
        throw std::domain_error("integrate_semi_infinite: tol must be > 0");
    switch (kind) {
        case IntegrandKind::OscillatorySin:
            return integrate_oscillatory(f, true, opt);
        case IntegrandKind::OscillatoryCos:
            return integrate_oscillatory(f, false, opt);
        case IntegrandKind::Smooth:
            return integrate_smooth(f, opt);
    }
    throw std::logic_error("integrate_semi_infinite: unknown kind");
}

}  // namespace mcdf
