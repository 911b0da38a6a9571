#pragma once
// Analytical reversible-binding channel: frequency-domain transform of the
// receiver response, cumulative binding probability psi(t), and the
// Skellam statistics of per-slot bound-molecule counts under OOK with
// intersymbol interference.

#include <complex>
#include <utility>
#include <vector>

#include "mcdf/numerics.hpp"

namespace mcdf {

// Spherical receiver with reversible surface kinetics.
struct ReceiverKinetics {
    double radius = 5.0;   // um
    double k_on = 1.0e4;   // um/s, association on contact
    double k_off = 100.0;  // 1/s, complex dissociation

    void validate() const;
    double surface_area() const;  // 4 pi r^2, um^2
};

// One point-transmitter -> spherical-receiver diffusion hop.
struct HopChannel {
    double diffusion = 79.4;  // um^2/s
    double distance = 15.0;   // um, transmitter to receiver center
    ReceiverKinetics receiver;

    void validate() const;
};

// Transmission context for one decision slot: the bit history that shapes
// the interference sums, the per-"1" emission size, and the slot index
// being evaluated.
struct SlotContext {
    std::vector<int> bits;      // transmitted symbols x[1..], 0/1
    double emission = 1000.0;   // molecules released per "1"
    int slot_index = 1;         // 1-based slot n under evaluation
    double bit_interval = 0.7;  // s

    void validate() const;
};

// Frequency response of the reversible-binding receiver at angular
// frequency w > 0. The w -> 0 limit is purely real, 1/(4 pi d D).
std::complex<double> u_transform(double w, const HopChannel& hop);

// Probability that a molecule released at t = 0 exists as a bound complex
// at time t. Evaluates three semi-infinite integrals of u_transform; the
// non-oscillatory one is regularized by the substitution w = u^2 so its
// integrand is analytic at the origin. Values outside [0, 1] by more than
// 10 * tol raise; smaller excursions clamp with a warning.
double binding_response(double t, const HopChannel& hop, double tol = 1e-9);

// As binding_response, but memoized on (hop, t, tol). Safe for concurrent
// callers; concurrent and sequential calls return identical values.
double binding_response_cached(double t, const HopChannel& hop,
                               double tol = 1e-9);

// Means of the cumulative bound counts at the end of slot n and of slot
// n-1: lambda1 sums emissions over slots 1..n weighted by psi at the
// elapsed lag, lambda2 the same over slots 1..n-1. The second-hop variant
// is the same computation applied to the relay's bit sequence at slot n+1.
std::pair<double, double> mean_bound_pair(const SlotContext& ctx,
                                          const HopChannel& hop,
                                          double tol = 1e-9);

// Net bound-count change over slot n, modeled as the difference of the two
// cumulative Poisson counts.
SkellamDist slot_count_distribution(const SlotContext& ctx,
                                    const HopChannel& hop, double tol = 1e-9);

// Count of clamped psi excursions since process start (diagnostic).
long psi_clamp_count();

}  // namespace mcdf
