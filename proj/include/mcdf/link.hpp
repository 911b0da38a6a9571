#pragma once
// Detection and end-to-end error analysis for the two-hop decode-and-forward
// link: threshold detection, per-hop miss/false-alarm probabilities, the
// relay transmit prior, chain-rule error combination, the single-hop direct
// baseline, and the relay-position / molecule-allocation sweeps.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mcdf/channel.hpp"

namespace mcdf {

// Full two-hop system description. Nodes sit on the x axis: source at 0,
// relay center at d_sr, destination center at d_sd.
struct LinkConfig {
    // topology (um)
    double d_sd = 30.0;
    double d_sr = 15.0;
    double r_r = 5.0;
    double r_d = 5.0;

    // medium: both molecule species share one diffusion coefficient (um^2/s)
    double diffusion = 79.4;

    // receiver kinetics (um/s, 1/s)
    double relay_k_on = 1.0e4;
    double relay_k_off = 100.0;
    double dest_k_on = 1.0e4;
    double dest_k_off = 100.0;

    // protocol
    double bit_interval = 0.7;       // s
    int n_a = 1000;                  // molecules per "1" at the source
    int n_b = 1000;                  // molecules per "1" at the relay
    double p0 = 0.5;                 // prior of bit 0
    double p1 = 0.5;                 // prior of bit 1
    std::vector<int> prefix = {1, 1};
    int eval_slot = 3;               // decision slot n; must be prefix size + 1

    // detection thresholds; unset means "optimize"
    std::optional<int> tau_r;
    std::optional<int> tau_d;

    // When true, the second-hop interference is averaged over every
    // possible relay decoding of the prefix, weighted by its probability.
    // Default keeps the prefix re-encoded exactly as transmitted.
    bool strict_relay_isi = false;

    double quad_tol = 1e-9;  // psi quadrature tolerance

    void validate() const;
    double d_rd() const { return d_sd - d_sr; }
    HopChannel first_hop() const;
    HopChannel second_hop() const;
};

// Conditional decision probabilities for both hops plus the end-to-end
// error probability. p_s1r0 = Pr(relay decodes 0 | source sent 1), etc.;
// p_r1d0 = Pr(destination decodes 0 | relay sent 1), etc.
struct ErrorBreakdown {
    double p_s1r0 = 0, p_s0r1 = 0, p_s1r1 = 0, p_s0r0 = 0;
    double p_r1d0 = 0, p_r0d1 = 0, p_r1d1 = 0, p_r0d0 = 0;
    double pe = 0;
};

// Threshold rule: decide 1 iff count >= tau.
inline int detect(std::int64_t count, std::int64_t tau) {
    return count >= tau ? 1 : 0;
}

struct HopErrorProbs {
    double miss = 0;         // Pr(decide 0 | conditioned bit 1)
    double false_alarm = 0;  // Pr(decide 1 | conditioned bit 0)
};

enum class HopIndex { First, Second };

// Miss / false-alarm probabilities of one hop at the configured thresholds
// (both must be set). The first hop is evaluated at slot n, the second at
// slot n+1 with the relay's one-slot-delayed bit sequence.
HopErrorProbs hop_error_probs(const LinkConfig& config, HopIndex hop);

// Pr(relay transmits 0) = P0 (1 - false_alarm) + P1 miss of the first hop.
double relay_prior(const LinkConfig& config);

// Chain-rule combination of the two hops' conditional probabilities.
// Thresholds must be set in the config (use optimize_thresholds first or
// fix them explicitly).
ErrorBreakdown two_hop_error(const LinkConfig& config);

// The same end-to-end probability regrouped by relay decision chains,
// valid for equal priors; used as an algebraic cross-check of pe.
double two_hop_pe_grouped(const ErrorBreakdown& b);

struct DirectResult {
    double pe = 0;
    int tau = 0;
};

// Single-hop source->destination baseline over distance d_sd with
// n_direct molecules per "1" and an exhaustively optimized threshold.
DirectResult direct_error(const LinkConfig& config, int n_direct);

struct ThresholdSearch {
    int tau_r = 0;
    int tau_d = 0;
    double pe = 0;
};

// Exhaustive grid search over (tau_r, tau_d) in [range.first, range.second]^2.
// Ties break toward the lexicographically smallest pair.
ThresholdSearch optimize_thresholds(const LinkConfig& config,
                                    std::pair<int, int> tau_range);

// Default search range [0, ceil(max lambda1) + 5 sigma]: the optimum lies
// between the bit-0 and bit-1 means of either hop.
std::pair<int, int> default_tau_range(const LinkConfig& config);
ThresholdSearch optimize_thresholds(const LinkConfig& config);

struct RelayPositionPoint {
    double ratio = 0;  // d_sr / d_sd
    int tau_r = 0;
    int tau_d = 0;
    double pe = 0;
};

// Moves the relay to ratio * d_sd for each ratio, re-optimizes the
// thresholds there, and records the resulting error probability.
std::vector<RelayPositionPoint> sweep_relay_position(
    const LinkConfig& config, const std::vector<double>& ratios);

struct AllocationPoint {
    int n_a = 0;
    int n_b = 0;
    int tau_r = 0;
    int tau_d = 0;
    double pe = 0;
};

// Splits a fixed molecule budget between source and relay emissions,
// re-optimizing thresholds at every split.
std::vector<AllocationPoint> sweep_allocation(const LinkConfig& config,
                                              int budget,
                                              const std::vector<int>& n_a_values);

}  // namespace mcdf
