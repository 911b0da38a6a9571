#pragma once
// Particle-based Brownian-dynamics Monte Carlo of the two-hop link: free
// diffusion, reflection / association / dissociation at reversible receiver
// surfaces, decode-and-forward relaying, and BER estimation. Serves as the
// independent check of the analytical channel model.
//
// Each molecule is simulated as an independent trajectory with a
// position-adaptive time step: far from the receiver the step grows
// quadratically with the gap, near the surface it is capped so the
// association probability per contact stays in the valid range of the
// reactive-boundary rule. Molecules never interact, so snapshots and
// molecules parallelize freely; all tallies are integers, which makes
// results bit-identical across worker counts.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcdf/link.hpp"
#include "mcdf/rng.hpp"

namespace mcdf {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

enum class Species { A, B };

// Free molecule or surface-bound complex.
struct Molecule {
    Vec3 position;
    Species species = Species::A;
    bool bound = false;
    double bind_time = 0.0;  // valid when bound
};

// The one sphere a given species reacts with; other bodies are transparent
// to it (the relay retransmits from its own center, so its body must not
// block the species it emits).
struct ReactiveSphere {
    Vec3 center;
    double radius = 5.0;
    double k_on = 1.0e4;   // um/s
    double k_off = 100.0;  // 1/s
};

enum class BoundaryRule { ErbanChapman };
enum class DesorbPlacement { SurfaceOffset, FixedEpsilon };

// Monte Carlo controls. `dt` is the sampling interval of recorded traces
// (and the dissociation-step quantum of the public single-step API); the
// internal trajectory integrator refines it near surfaces as described
// above and may stretch free-flight steps far from them.
struct SimControls {
    double dt = 0.002;          // s, trace sampling interval
    int snapshots = 10000;      // independent realizations
    std::uint64_t seed = 1;
    BoundaryRule boundary_rule = BoundaryRule::ErbanChapman;
    DesorbPlacement desorb_placement = DesorbPlacement::SurfaceOffset;
    double desorb_epsilon = 0.01;  // um, FixedEpsilon mode only
    double contact_p_max = 0.5;    // association probability at contact steps
    double guard_sigmas = 4.5;     // free step std must stay under gap/guard
    int threads = 0;               // 0 = OpenMP default

    void validate() const;
};

// Full simulation input per the protocol: source bit sequence (prefix plus
// final bit choices are handled by the BER driver), link parameters, and
// the Monte Carlo controls.
struct SimConfig {
    LinkConfig link;
    SimControls controls;
};

// One Gaussian free-diffusion step.
Vec3 brownian_step(const Vec3& position, double dt, double diffusion,
                   Xoshiro256pp& rng);

struct SurfaceOutcome {
    bool bound = false;
    Vec3 position;  // binding point on the surface, or reflected position
};

// Resolves a proposed end position that landed inside the reactive sphere:
// binds at the radial surface projection with the reactive-boundary
// association probability p_on = k_on sqrt(pi dt / D) (capped at 1 with a
// warning counter), otherwise mirrors the intruding point back outside.
SurfaceOutcome surface_interaction(const Vec3& proposed,
                                   const ReactiveSphere& body, double dt,
                                   double diffusion, Xoshiro256pp& rng);

// One dissociation trial over dt: unbinds with probability
// 1 - exp(-k_off dt) and places the molecule along the outward normal at
// radius + |g|, g ~ N(0, 2 D dt).
Molecule dissociation_step(const Molecule& molecule,
                           const ReactiveSphere& body, double dt,
                           double diffusion, Xoshiro256pp& rng);

// Count of capped association probabilities since process start.
long association_cap_count();

// Bound-complex time series of one transmitter/receiver pair.
struct HopTrace {
    double sample_dt = 0.0;
    std::vector<int> complex_count;  // bound complexes at k * sample_dt
    std::vector<int> slot_counts;    // net change per bit slot, 1-based-1
};

// Simulates one realization of a single hop: molecules released at the
// slot starts per `bits`, stepped to the end of the last slot. ISI emerges
// from molecules persisting across slots.
HopTrace simulate_hop(const HopChannel& hop, const std::vector<int>& bits,
                      int molecules_per_one, double bit_interval,
                      const SimControls& controls,
                      std::uint64_t snapshot_index = 0);

// Net per-slot counts over an ensemble of independent snapshots
// (row = snapshot). OpenMP over snapshots; the serial variant is the
// plain-loop reference implementation.
std::vector<std::vector<int>> run_hop_ensemble(const HopChannel& hop,
                                               const std::vector<int>& bits,
                                               int molecules_per_one,
                                               double bit_interval,
                                               const SimControls& controls);
std::vector<std::vector<int>> run_hop_ensemble_serial(
    const HopChannel& hop, const std::vector<int>& bits,
    int molecules_per_one, double bit_interval, const SimControls& controls);

struct EmpiricalBreakdown {
    // First hop at slot n, conditioned on the source bit.
    std::int64_t sent1 = 0, relay0_given1 = 0;
    std::int64_t sent0 = 0, relay1_given0 = 0;
    // Second hop at slot n+1, conditioned on the relay's transmitted bit.
    std::int64_t relay_sent1 = 0, dest0_given_relay1 = 0;
    std::int64_t relay_sent0 = 0, dest1_given_relay0 = 0;
};

struct BerResult {
    double pe = 0;
    double ci_low = 0;   // Wilson 95% interval of the pooled error rate
    double ci_high = 0;
    std::int64_t errors = 0;
    std::int64_t snapshots = 0;
    EmpiricalBreakdown breakdown;
};

// End-to-end BER over `controls.snapshots` independent realizations. The
// final source bit is 1 in round(snapshots * p1) snapshots and 0 in the
// rest, so the pooled error fraction is the prior-weighted estimate.
// Thresholds must be set in the config.
BerResult simulate_two_hop_ber(const SimConfig& config);
BerResult simulate_two_hop_ber_serial(const SimConfig& config);

// Optional per-sample trace of one snapshot (columns for both receivers).
struct TwoHopTrace {
    double sample_dt = 0.0;
    std::vector<int> complexes_relay;
    std::vector<int> complexes_dest;
};
TwoHopTrace trace_two_hop_snapshot(const SimConfig& config, int source_bit,
                                   std::uint64_t snapshot_index);

struct PsiEstimate {
    double t = 0;
    double psi_hat = 0;
    double std_err = 0;
};

// Monte Carlo estimate of the binding response: one instantaneous release
// of `molecules` ligands at the hop distance, bound fraction recorded at
// each grid time. OpenMP over molecules; serial variant for testing.
std::vector<PsiEstimate> estimate_psi_mc(const HopChannel& hop,
                                         const std::vector<double>& t_grid,
                                         int molecules,
                                         const SimControls& controls);
std::vector<PsiEstimate> estimate_psi_mc_serial(const HopChannel& hop,
                                                const std::vector<double>& t_grid,
                                                int molecules,
                                                const SimControls& controls);

}  // namespace mcdf
