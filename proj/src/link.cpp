#include "mcdf/link.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcdf {

namespace {

// Lower-tail table P(N <= m) over the distribution's support window.
struct CdfTable {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::vector<double> sums;  // sums[i] = P(N <= lo + i)

    double at(std::int64_t m) const {
        if (m < lo) return 0.0;
        if (m >= hi) return sums.back();
        return sums[static_cast<size_t>(m - lo)];
    }
};

CdfTable build_cdf(const SkellamDist& dist) {
    const auto [lo, hi] = skellam_window(dist);
    CdfTable table;
    table.lo = lo;
    table.hi = hi;
    table.sums.reserve(static_cast<size_t>(hi - lo + 1));
    double run = 0.0;
    for (std::int64_t m = lo; m <= hi; ++m) {
        run += skellam_pmf(m, dist);
        table.sums.push_back(std::min(run, 1.0));
    }
    return table;
}

std::vector<int> with_slot_bit(const std::vector<int>& prefix, int bit) {
    std::vector<int> bits = prefix;
    bits.push_back(bit);
    return bits;
}

// Relay transmit sequence for one decoding history of the prefix: nothing
// in slot 1, the re-encoded prefix one slot late, then the conditioned bit.
std::vector<int> relay_sequence(const std::vector<int>& decoded_prefix,
                                int bit) {
    std::vector<int> bits;
    bits.reserve(decoded_prefix.size() + 2);
    bits.push_back(0);
    bits.insert(bits.end(), decoded_prefix.begin(), decoded_prefix.end());
    bits.push_back(bit);
    return bits;
}

SkellamDist hop1_dist(const LinkConfig& c, int bit) {
    SlotContext ctx{with_slot_bit(c.prefix, bit), static_cast<double>(c.n_a),
                    c.eval_slot, c.bit_interval};
    return slot_count_distribution(ctx, c.first_hop(), c.quad_tol);
}

SkellamDist hop2_dist(const LinkConfig& c,
                      const std::vector<int>& decoded_prefix, int bit) {
    SlotContext ctx{relay_sequence(decoded_prefix, bit),
                    static_cast<double>(c.n_b), c.eval_slot + 1,
                    c.bit_interval};
    return slot_count_distribution(ctx, c.second_hop(), c.quad_tol);
}

// Everything the threshold scan needs, precomputed once per config.
struct LinkTables {
    CdfTable hop1_bit0;
    CdfTable hop1_bit1;
    // Second hop per decoding history of the prefix, per conditioned bit.
    std::vector<CdfTable> hop2_bit0;
    std::vector<CdfTable> hop2_bit1;
    // Per prefix slot i (1-based), lower-tail table of the relay's slot-i
    // net count under the actual source prefix; drives history weights.
    std::vector<CdfTable> prefix_slot;
    std::vector<std::vector<int>> histories;
    double lambda1_max = 0;
    double sigma_max = 0;
};

void track(LinkTables& t, const SkellamDist& d) {
    t.lambda1_max = std::max(t.lambda1_max, d.lambda1);
    t.sigma_max = std::max(t.sigma_max, std::sqrt(d.variance()));
}

LinkTables build_tables(const LinkConfig& c) {
    LinkTables t;
    const SkellamDist h1b0 = hop1_dist(c, 0);
    const SkellamDist h1b1 = hop1_dist(c, 1);
    track(t, h1b0);
    track(t, h1b1);
    t.hop1_bit0 = build_cdf(h1b0);
    t.hop1_bit1 = build_cdf(h1b1);

    const int plen = static_cast<int>(c.prefix.size());
    if (c.strict_relay_isi && plen > 0) {
        for (int mask = 0; mask < (1 << plen); ++mask) {
            std::vector<int> h(plen);
            for (int i = 0; i < plen; ++i) h[i] = (mask >> i) & 1;
            t.histories.push_back(std::move(h));
        }
        // Relay's own per-slot statistics while receiving the prefix.
        for (int slot = 1; slot <= plen; ++slot) {
            std::vector<int> bits(c.prefix.begin(), c.prefix.begin() + slot);
            SlotContext ctx{bits, static_cast<double>(c.n_a), slot,
                            c.bit_interval};
            t.prefix_slot.push_back(build_cdf(
                slot_count_distribution(ctx, c.first_hop(), c.quad_tol)));
        }
    } else {
        t.histories.push_back(c.prefix);
    }
    for (const auto& h : t.histories) {
        const SkellamDist d0 = hop2_dist(c, h, 0);
        const SkellamDist d1 = hop2_dist(c, h, 1);
        track(t, d0);
        track(t, d1);
        t.hop2_bit0.push_back(build_cdf(d0));
        t.hop2_bit1.push_back(build_cdf(d1));
    }
    return t;
}

std::vector<double> history_weights(const LinkTables& t, int tau_r) {
    if (t.histories.size() == 1) return {1.0};
    std::vector<double> w(t.histories.size(), 1.0);
    for (size_t k = 0; k < t.histories.size(); ++k) {
        for (size_t i = 0; i < t.histories[k].size(); ++i) {
            const double q_one = 1.0 - t.prefix_slot[i].at(tau_r - 1);
            w[k] *= t.histories[k][i] ? q_one : 1.0 - q_one;
        }
    }
    return w;
}

struct Hop2Tails {
    double tail_bit0 = 0;  // Pr(decide 1 | relay sent 0)
    double tail_bit1 = 0;  // Pr(decide 1 | relay sent 1)
};

Hop2Tails hop2_tails(const LinkTables& t, const std::vector<double>& weights,
                     int tau_d) {
    Hop2Tails out;
    for (size_t k = 0; k < weights.size(); ++k) {
        out.tail_bit0 += weights[k] * (1.0 - t.hop2_bit0[k].at(tau_d - 1));
        out.tail_bit1 += weights[k] * (1.0 - t.hop2_bit1[k].at(tau_d - 1));
    }
    return out;
}

ErrorBreakdown combine(const LinkConfig& c, double miss1, double fa1,
                       const Hop2Tails& tails) {
    ErrorBreakdown b;
    b.p_s1r0 = miss1;
    b.p_s1r1 = 1.0 - miss1;
    b.p_s0r1 = fa1;
    b.p_s0r0 = 1.0 - fa1;
    b.p_r1d1 = tails.tail_bit1;
    b.p_r1d0 = 1.0 - tails.tail_bit1;
    b.p_r0d1 = tails.tail_bit0;
    b.p_r0d0 = 1.0 - tails.tail_bit0;
    b.pe = c.p1 * (b.p_s1r1 * b.p_r1d0 + b.p_s1r0 * b.p_r0d0) +
           c.p0 * (b.p_s0r0 * b.p_r0d1 + b.p_s0r1 * b.p_r1d1);
    return b;
}

ErrorBreakdown evaluate_at(const LinkConfig& c, const LinkTables& t, int tau_r,
                           int tau_d) {
    const double miss1 = t.hop1_bit1.at(tau_r - 1);
    const double fa1 = 1.0 - t.hop1_bit0.at(tau_r - 1);
    const auto weights = history_weights(t, tau_r);
    return combine(c, miss1, fa1, hop2_tails(t, weights, tau_d));
}

std::pair<int, int> tau_range_from(const LinkTables& t) {
    const int hi = static_cast<int>(
        std::ceil(t.lambda1_max + 5.0 * t.sigma_max));
    return {0, std::max(hi, 1)};
}

int required_threshold(const LinkConfig& c, bool relay) {
    const std::optional<int>& tau = relay ? c.tau_r : c.tau_d;
    if (!tau)
        throw std::invalid_argument(
            "LinkConfig: threshold not set; run optimize_thresholds or fix "
            "tau_r / tau_d");
    return *tau;
}

}  // namespace

void LinkConfig::validate() const {
    if (!(d_sd > 0) || !(d_sr > 0) || !(d_sr < d_sd))
        throw std::domain_error("topology requires 0 < d_sr < d_sd");
    if (!(r_r > 0) || !(r_d > 0))
        throw std::domain_error("receiver radii must be > 0");
    if (d_sr <= r_r)
        throw std::domain_error(
            "relay sphere swallows the source: need d_sr > r_r");
    if (d_sd <= r_d)
        throw std::domain_error(
            "destination sphere swallows the source: need d_sd > r_d");
    if (d_rd() <= r_d)
        throw std::domain_error(
            "relay center inside the destination sphere: need d_sd - d_sr > "
            "r_d");
    if (d_rd() <= r_r + r_d)
        throw std::domain_error(
            "relay and destination spheres overlap: need d_sd - d_sr > r_r + "
            "r_d");
    if (!(diffusion > 0)) throw std::domain_error("diffusion must be > 0");
    if (relay_k_on < 0 || relay_k_off < 0 || dest_k_on < 0 || dest_k_off < 0)
        throw std::domain_error("kinetic rates must be >= 0");
    if (!(bit_interval > 0)) throw std::domain_error("bit_interval must be > 0");
    if (n_a < 0 || n_b < 0) throw std::domain_error("emission counts >= 0");
    if (!(p0 >= 0) || !(p1 >= 0) || std::abs(p0 + p1 - 1.0) > 1e-12)
        throw std::domain_error("priors must be nonnegative and sum to 1");
    for (int b : prefix)
        if (b != 0 && b != 1) throw std::domain_error("prefix bits must be 0/1");
    if (eval_slot != static_cast<int>(prefix.size()) + 1)
        throw std::domain_error("eval_slot must equal prefix length + 1");
    if (!(quad_tol > 0)) throw std::domain_error("quad_tol must be > 0");
}

HopChannel LinkConfig::first_hop() const {
    return HopChannel{diffusion, d_sr, ReceiverKinetics{r_r, relay_k_on,
                                                        relay_k_off}};
}

HopChannel LinkConfig::second_hop() const {
    return HopChannel{diffusion, d_rd(), ReceiverKinetics{r_d, dest_k_on,
                                                          dest_k_off}};
}

HopErrorProbs hop_error_probs(const LinkConfig& config, HopIndex hop) {
    config.validate();
    const LinkTables t = build_tables(config);
    if (hop == HopIndex::First) {
        const int tau = required_threshold(config, true);
        return {t.hop1_bit1.at(tau - 1), 1.0 - t.hop1_bit0.at(tau - 1)};
    }
    const int tau_r = required_threshold(config, true);
    const int tau_d = required_threshold(config, false);
    const auto weights = history_weights(t, tau_r);
    const Hop2Tails tails = hop2_tails(t, weights, tau_d);
    return {1.0 - tails.tail_bit1, tails.tail_bit0};
}

double relay_prior(const LinkConfig& config) {
    const HopErrorProbs h1 = hop_error_probs(config, HopIndex::First);
    return config.p0 * (1.0 - h1.false_alarm) + config.p1 * h1.miss;
}

ErrorBreakdown two_hop_error(const LinkConfig& config) {
    config.validate();
    LinkConfig c = config;
    if (!c.tau_r || !c.tau_d) {
        const ThresholdSearch best = optimize_thresholds(config);
        c.tau_r = c.tau_r ? c.tau_r : std::optional<int>(best.tau_r);
        c.tau_d = c.tau_d ? c.tau_d : std::optional<int>(best.tau_d);
    }
    const LinkTables t = build_tables(c);
    return evaluate_at(c, t, *c.tau_r, *c.tau_d);
}

double two_hop_pe_grouped(const ErrorBreakdown& b) {
    return 0.5 * (b.p_s0r0 * b.p_r0d1 + b.p_s0r1 * b.p_r1d1 +
                  b.p_s1r1 * b.p_r1d0 + b.p_s1r0 * b.p_r0d0);
}

DirectResult direct_error(const LinkConfig& config, int n_direct) {
    config.validate();
    if (n_direct < 0) throw std::domain_error("n_direct must be >= 0");
    const HopChannel hop{config.diffusion, config.d_sd,
                         ReceiverKinetics{config.r_d, config.dest_k_on,
                                          config.dest_k_off}};
    const double tol = config.quad_tol;
    SlotContext ctx0{with_slot_bit(config.prefix, 0),
                     static_cast<double>(n_direct), config.eval_slot,
                     config.bit_interval};
    SlotContext ctx1{with_slot_bit(config.prefix, 1),
                     static_cast<double>(n_direct), config.eval_slot,
                     config.bit_interval};
    const SkellamDist d0 = slot_count_distribution(ctx0, hop, tol);
    const SkellamDist d1 = slot_count_distribution(ctx1, hop, tol);
    const CdfTable c0 = build_cdf(d0);
    const CdfTable c1 = build_cdf(d1);
    const double sigma =
        std::max(std::sqrt(d0.variance()), std::sqrt(d1.variance()));
    const int hi =
        std::max(static_cast<int>(std::ceil(d1.lambda1 + 5.0 * sigma)), 1);

    DirectResult best{std::numeric_limits<double>::infinity(), 0};
    for (int tau = 0; tau <= hi; ++tau) {
        const double pe = config.p1 * c1.at(tau - 1) +
                          config.p0 * (1.0 - c0.at(tau - 1));
        if (pe < best.pe) best = {pe, tau};
    }
    return best;
}

std::pair<int, int> default_tau_range(const LinkConfig& config) {
    config.validate();
    return tau_range_from(build_tables(config));
}

ThresholdSearch optimize_thresholds(const LinkConfig& config,
                                    std::pair<int, int> tau_range) {
    config.validate();
    if (tau_range.second < tau_range.first)
        throw std::invalid_argument("optimize_thresholds: empty tau range");
    const LinkTables t = build_tables(config);

    ThresholdSearch best{tau_range.first, tau_range.first,
                         std::numeric_limits<double>::infinity()};
    for (int tau_r = tau_range.first; tau_r <= tau_range.second; ++tau_r) {
        const double miss1 = t.hop1_bit1.at(tau_r - 1);
        const double fa1 = 1.0 - t.hop1_bit0.at(tau_r - 1);
        const auto weights = history_weights(t, tau_r);
        for (int tau_d = tau_range.first; tau_d <= tau_range.second; ++tau_d) {
            const ErrorBreakdown b =
                combine(config, miss1, fa1, hop2_tails(t, weights, tau_d));
            if (b.pe < best.pe) best = {tau_r, tau_d, b.pe};
        }
    }
    return best;
}

ThresholdSearch optimize_thresholds(const LinkConfig& config) {
    return optimize_thresholds(config, default_tau_range(config));
}

std::vector<RelayPositionPoint> sweep_relay_position(
    const LinkConfig& config, const std::vector<double>& ratios) {
    config.validate();
    std::vector<RelayPositionPoint> out(ratios.size());
    std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(ratios.size());
         ++i) {
        try {
            LinkConfig point = config;
            point.d_sr = ratios[static_cast<size_t>(i)] * config.d_sd;
            point.tau_r.reset();
            point.tau_d.reset();
            point.validate();
            const ThresholdSearch best = optimize_thresholds(point);
            out[static_cast<size_t>(i)] = {ratios[static_cast<size_t>(i)],
                                           best.tau_r, best.tau_d, best.pe};
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<AllocationPoint> sweep_allocation(
    const LinkConfig& config, int budget, const std::vector<int>& n_a_values) {
    config.validate();
    if (budget < 0) throw std::domain_error("budget must be >= 0");
    std::vector<AllocationPoint> out(n_a_values.size());
    std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_a_values.size());
         ++i) {
        try {
            const int n_a = n_a_values[static_cast<size_t>(i)];
            if (n_a < 0 || n_a > budget)
                throw std::domain_error(
                    "allocation sweep: n_a must lie in [0, budget]");
            LinkConfig point = config;
            point.n_a = n_a;
            point.n_b = budget - n_a;
            point.tau_r.reset();
            point.tau_d.reset();
            const ThresholdSearch best = optimize_thresholds(point);
            out[static_cast<size_t>(i)] = {n_a, budget - n_a, best.tau_r,
                                           best.tau_d, best.pe};
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace mcdf
