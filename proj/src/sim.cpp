#include "mcdf/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcdf {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::atomic<long> g_cap_count{0};

void note_cap() {
    const long n = g_cap_count.fetch_add(1, std::memory_order_relaxed) + 1;
    if (n <= 3)
        std::fprintf(stderr,
                     "mcdf: association probability capped at 1; the time "
                     "step is too coarse for this k_on\n");
}

double association_probability(double k_on, double dt, double diffusion) {
    if (k_on <= 0.0) return 0.0;
    double p = k_on * std::sqrt(kPi * dt / diffusion);
    if (p > 1.0) {
        note_cap();
        p = 1.0;
    }
    return p;
}

// Precomputed stepping constants for one (species, body) pair.
struct StepParams {
    ReactiveSphere body;
    double diffusion = 0;
    double dt_contact = 0;      // finest step, used at the surface
    double sigma_contact = 0;   // sqrt(2 D dt_contact)
    double p_contact = 0;       // association probability at dt_contact
    double guard_factor = 0;    // dt(gap) = gap^2 * guard_factor, far field
    double desorb_sigma = 0;    // SurfaceOffset placement scale
    double desorb_eps = 0;      // FixedEpsilon placement offset
    DesorbPlacement placement = DesorbPlacement::SurfaceOffset;
};

StepParams make_step_params(double diffusion, const ReactiveSphere& body,
                            const SimControls& c) {
    StepParams p;
    p.body = body;
    p.diffusion = diffusion;
    if (body.k_on > 0.0) {
        // Keep p_on = k_on sqrt(pi dt / D) at or below contact_p_max when
        // stepping against the surface.
        p.dt_contact = diffusion *
                       (c.contact_p_max / body.k_on) *
                       (c.contact_p_max / body.k_on) / kPi;
        p.dt_contact = std::min(p.dt_contact, c.dt);
    } else {
        // No binding; only reflection accuracy limits the step.
        const double h = 0.05 * body.radius;
        p.dt_contact = std::min(c.dt, h * h / (2.0 * diffusion));
    }
    p.guard_factor = 1.0 / (c.guard_sigmas * c.guard_sigmas * 2.0 * diffusion);
    p.sigma_contact = std::sqrt(2.0 * diffusion * p.dt_contact);
    p.p_contact = association_probability(body.k_on, p.dt_contact, diffusion);
    p.desorb_sigma = p.sigma_contact;
    p.desorb_eps = c.desorb_epsilon;
    p.placement = c.desorb_placement;
    return p;
}

// Independent trajectory of one molecule from `t` to `horizon`. Reports
// every bound interval [t_bind, t_unbind) through on_bound (t_unbind may
// exceed the horizon or be infinite; callers clamp).
template <typename OnBound>
void simulate_molecule(Vec3 pos, double t, double horizon,
                       const StepParams& p, Xoshiro256pp& rng,
                       OnBound&& on_bound) {
    const ReactiveSphere& body = p.body;
    const double D = p.diffusion;
    const double r = body.radius;
    while (t < horizon) {
        const double dx = pos.x - body.center.x;
        const double dy = pos.y - body.center.y;
        const double dz = pos.z - body.center.z;
        const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double gap = dist - r;
        assert(gap > -1e-9 * std::max(1.0, r) && "free molecule inside body");
        double dt = gap * gap * p.guard_factor;
        double sigma;
        bool at_contact_scale = dt <= p.dt_contact;
        if (at_contact_scale) {
            dt = p.dt_contact;
            sigma = p.sigma_contact;
        } else {
            sigma = 0.0;  // set below
        }
        if (t + dt > horizon) {
            dt = horizon - t;
            at_contact_scale = false;
        }
        if (!(dt > 0.0)) break;
        if (!at_contact_scale) sigma = std::sqrt(2.0 * D * dt);
        const Vec3 prop{pos.x + sigma * rng.gaussian(),
                        pos.y + sigma * rng.gaussian(),
                        pos.z + sigma * rng.gaussian()};
        const double px = prop.x - body.center.x;
        const double py = prop.y - body.center.y;
        const double pz = prop.z - body.center.z;
        const double pr2 = px * px + py * py + pz * pz;
        if (pr2 >= r * r) {  // stayed outside
            pos = prop;
            t += dt;
            continue;
        }
        const double pr = std::sqrt(pr2);
        double nx = 1.0, ny = 0.0, nz = 0.0;
        if (pr > 1e-12) {
            nx = px / pr;
            ny = py / pr;
            nz = pz / pr;
        }
        const double p_on = at_contact_scale
                                ? p.p_contact
                                : association_probability(body.k_on, dt, D);
        if (p_on > 0.0 && rng.uniform() < p_on) {
            const double t_bind = t + dt;
            const double t_unbind =
                body.k_off > 0.0 ? t_bind + rng.exponential(body.k_off) : kInf;
            on_bound(t_bind, t_unbind);
            if (t_unbind >= horizon) return;
            double eps = p.placement == DesorbPlacement::SurfaceOffset
                             ? std::abs(p.desorb_sigma * rng.gaussian())
                             : p.desorb_eps;
            eps = std::max(eps, 1e-12);
            pos = Vec3{body.center.x + nx * (r + eps),
                       body.center.y + ny * (r + eps),
                       body.center.z + nz * (r + eps)};
            t = t_unbind;
        } else {
            // Mirror the intruding point about the sphere surface.
            const double rho = 2.0 * r - pr;
            pos = Vec3{body.center.x + nx * rho, body.center.y + ny * rho,
                       body.center.z + nz * rho};
            t += dt;
        }
    }
}

// Adds +1 over the sample-grid indices covered by [t_on, t_off).
void mark_trace(std::vector<int>& diff, double dt, double t_on, double t_off,
                int samples) {
    int lo = static_cast<int>(std::ceil(t_on / dt - 1e-9));
    lo = std::max(lo, 0);
    int hi;
    if (t_off >= samples * dt)
        hi = samples;
    else
        hi = std::max(lo, static_cast<int>(std::ceil(t_off / dt - 1e-9)));
    if (lo < hi) {
        diff[static_cast<size_t>(lo)] += 1;
        diff[static_cast<size_t>(hi)] -= 1;
    }
}

struct Tally {
    std::int64_t errors = 0;
    std::int64_t snapshots = 0;
    EmpiricalBreakdown b;

    void merge(const Tally& o) {
        errors += o.errors;
        snapshots += o.snapshots;
        b.sent1 += o.b.sent1;
        b.relay0_given1 += o.b.relay0_given1;
        b.sent0 += o.b.sent0;
        b.relay1_given0 += o.b.relay1_given0;
        b.relay_sent1 += o.b.relay_sent1;
        b.dest0_given_relay1 += o.b.dest0_given_relay1;
        b.relay_sent0 += o.b.relay_sent0;
        b.dest1_given_relay0 += o.b.dest1_given_relay0;
    }
};

ReactiveSphere relay_body(const LinkConfig& link) {
    return {{link.d_sr, 0, 0}, link.r_r, link.relay_k_on, link.relay_k_off};
}

ReactiveSphere dest_body(const LinkConfig& link) {
    return {{link.d_sd, 0, 0}, link.r_d, link.dest_k_on, link.dest_k_off};
}

// One end-to-end realization: species-A hop, relay decisions, species-B
// hop, destination decision at slot n+1.
void run_snapshot(const SimConfig& cfg, int final_bit,
                  std::uint64_t snapshot_index, Tally& tally) {
    const LinkConfig& link = cfg.link;
    const SimControls& ctl = cfg.controls;
    const int n = link.eval_slot;
    const double tb = link.bit_interval;
    const int tau_r = *link.tau_r;
    const int tau_d = *link.tau_d;

    std::vector<int> source_bits = link.prefix;
    source_bits.push_back(final_bit);

    const StepParams pa = make_step_params(link.diffusion, relay_body(link), ctl);
    const StepParams pb = make_step_params(link.diffusion, dest_body(link), ctl);

    // Species A: cumulative bound counts at every slot boundary j * tb.
    std::vector<std::int64_t> cum_a(static_cast<size_t>(n) + 2, 0);
    const double horizon_a = n * tb;
    for (int slot = 1; slot <= n; ++slot) {
        if (source_bits[static_cast<size_t>(slot - 1)] != 1) continue;
        const double t0 = (slot - 1) * tb;
        for (int m = 0; m < link.n_a; ++m) {
            Xoshiro256pp rng(derive_stream(ctl.seed, snapshot_index, 0xA0,
                                           static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{0, 0, 0}, t0, horizon_a, pa, rng,
                              [&](double t_on, double t_off) {
                                  for (int j = 1; j <= n; ++j) {
                                      const double u = j * tb;
                                      if (t_on <= u && u < t_off)
                                          ++cum_a[static_cast<size_t>(j)];
                                  }
                              });
        }
    }

    std::vector<int> relay_tx(static_cast<size_t>(n) + 2, 0);  // x_r by slot
    int y_relay_at_n = 0;
    for (int j = 1; j <= n; ++j) {
        const std::int64_t net =
            cum_a[static_cast<size_t>(j)] - cum_a[static_cast<size_t>(j - 1)];
        const int decoded = detect(net, tau_r);
        relay_tx[static_cast<size_t>(j + 1)] = decoded;
        if (j == n) y_relay_at_n = decoded;
    }

    // Species B: releases at the start of slot j+1 for each decoded 1.
    std::vector<std::int64_t> cum_b(static_cast<size_t>(n) + 2, 0);
    const double horizon_b = (n + 1) * tb;
    for (int slot = 2; slot <= n + 1; ++slot) {
        if (relay_tx[static_cast<size_t>(slot)] != 1) continue;
        const double t0 = (slot - 1) * tb;
        for (int m = 0; m < link.n_b; ++m) {
            Xoshiro256pp rng(derive_stream(ctl.seed, snapshot_index, 0xB0,
                                           static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{link.d_sr, 0, 0}, t0, horizon_b, pb, rng,
                              [&](double t_on, double t_off) {
                                  for (int j = 1; j <= n + 1; ++j) {
                                      const double u = j * tb;
                                      if (t_on <= u && u < t_off)
                                          ++cum_b[static_cast<size_t>(j)];
                                  }
                              });
        }
    }
    const std::int64_t net_b =
        cum_b[static_cast<size_t>(n + 1)] - cum_b[static_cast<size_t>(n)];
    const int y_dest = detect(net_b, tau_d);

    ++tally.snapshots;
    if (y_dest != final_bit) ++tally.errors;
    if (final_bit == 1) {
        ++tally.b.sent1;
        if (y_relay_at_n == 0) ++tally.b.relay0_given1;
    } else {
        ++tally.b.sent0;
        if (y_relay_at_n == 1) ++tally.b.relay1_given0;
    }
    const int relay_bit = relay_tx[static_cast<size_t>(n + 1)];
    if (relay_bit == 1) {
        ++tally.b.relay_sent1;
        if (y_dest == 0) ++tally.b.dest0_given_relay1;
    } else {
        ++tally.b.relay_sent0;
        if (y_dest == 1) ++tally.b.dest1_given_relay0;
    }
}

void wilson_interval(std::int64_t errors, std::int64_t total, double& lo,
                     double& hi) {
    if (total <= 0) {
        lo = 0;
        hi = 1;
        return;
    }
    const double z = 1.959963984540054;
    const double n = static_cast<double>(total);
    const double phat = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    lo = std::max(0.0, center - half);
    hi = std::min(1.0, center + half);
}

BerResult finish_ber(const Tally& tally) {
    BerResult out;
    out.errors = tally.errors;
    out.snapshots = tally.snapshots;
    out.pe = tally.snapshots > 0
                 ? static_cast<double>(tally.errors) /
                       static_cast<double>(tally.snapshots)
                 : 0.0;
    wilson_interval(tally.errors, tally.snapshots, out.ci_low, out.ci_high);
    out.breakdown = tally.b;
    return out;
}

std::int64_t ones_snapshot_count(const SimConfig& cfg) {
    return std::llround(cfg.link.p1 *
                        static_cast<double>(cfg.controls.snapshots));
}

void validate_ber_config(const SimConfig& cfg) {
    cfg.link.validate();
    cfg.controls.validate();
    if (!cfg.link.tau_r || !cfg.link.tau_d)
        throw std::invalid_argument(
            "simulate_two_hop_ber: thresholds must be set");
}

}  // namespace

void SimControls::validate() const {
    if (!(dt > 0.0) || dt > 0.002 + 1e-15)
        throw std::domain_error(
            "SimControls: dt must lie in (0, 0.002] (the protocol sampling "
            "interval)");
    if (snapshots < 1) throw std::domain_error("SimControls: snapshots >= 1");
    if (!(contact_p_max > 0.0) || contact_p_max > 1.0)
        throw std::domain_error("SimControls: contact_p_max in (0, 1]");
    if (!(guard_sigmas >= 1.0))
        throw std::domain_error("SimControls: guard_sigmas >= 1");
    if (desorb_placement == DesorbPlacement::FixedEpsilon &&
        !(desorb_epsilon > 0.0))
        throw std::domain_error("SimControls: desorb_epsilon must be > 0");
    if (threads < 0) throw std::domain_error("SimControls: threads >= 0");
}

Vec3 brownian_step(const Vec3& position, double dt, double diffusion,
                   Xoshiro256pp& rng) {
    if (!(dt > 0.0)) throw std::domain_error("brownian_step: dt must be > 0");
    if (diffusion < 0.0)
        throw std::domain_error("brownian_step: diffusion must be >= 0");
    const double sigma = std::sqrt(2.0 * diffusion * dt);
    return {position.x + sigma * rng.gaussian(),
            position.y + sigma * rng.gaussian(),
            position.z + sigma * rng.gaussian()};
}

SurfaceOutcome surface_interaction(const Vec3& proposed,
                                   const ReactiveSphere& body, double dt,
                                   double diffusion, Xoshiro256pp& rng) {
    const double px = proposed.x - body.center.x;
    const double py = proposed.y - body.center.y;
    const double pz = proposed.z - body.center.z;
    const double pr = std::sqrt(px * px + py * py + pz * pz);
    if (pr >= body.radius)
        throw std::invalid_argument(
            "surface_interaction: proposed position is not inside the body");
    double nx = 1.0, ny = 0.0, nz = 0.0;
    if (pr > 1e-12) {
        nx = px / pr;
        ny = py / pr;
        nz = pz / pr;
    }
    const double p_on = association_probability(body.k_on, dt, diffusion);
    SurfaceOutcome out;
    if (p_on > 0.0 && rng.uniform() < p_on) {
        out.bound = true;
        out.position = {body.center.x + nx * body.radius,
                        body.center.y + ny * body.radius,
                        body.center.z + nz * body.radius};
    } else {
        const double rho = 2.0 * body.radius - pr;
        out.bound = false;
        out.position = {body.center.x + nx * rho, body.center.y + ny * rho,
                        body.center.z + nz * rho};
    }
    return out;
}

Molecule dissociation_step(const Molecule& molecule,
                           const ReactiveSphere& body, double dt,
                           double diffusion, Xoshiro256pp& rng) {
    if (!molecule.bound)
        throw std::invalid_argument("dissociation_step: molecule not bound");
    Molecule out = molecule;
    const double p_off =
        body.k_off > 0.0 ? 1.0 - std::exp(-body.k_off * dt) : 0.0;
    if (p_off > 0.0 && rng.uniform() < p_off) {
        const double px = molecule.position.x - body.center.x;
        const double py = molecule.position.y - body.center.y;
        const double pz = molecule.position.z - body.center.z;
        const double pr = std::sqrt(px * px + py * py + pz * pz);
        double nx = 1.0, ny = 0.0, nz = 0.0;
        if (pr > 1e-12) {
            nx = px / pr;
            ny = py / pr;
            nz = pz / pr;
        }
        const double eps = std::max(
            std::abs(std::sqrt(2.0 * diffusion * dt) * rng.gaussian()), 1e-12);
        out.bound = false;
        out.position = {body.center.x + nx * (body.radius + eps),
                        body.center.y + ny * (body.radius + eps),
                        body.center.z + nz * (body.radius + eps)};
    }
    return out;
}

long association_cap_count() {
    return g_cap_count.load(std::memory_order_relaxed);
}

namespace {

HopTrace simulate_hop_impl(const HopChannel& hop, const std::vector<int>& bits,
                           int molecules_per_one, double bit_interval,
                           const SimControls& controls,
                           std::uint64_t snapshot_index) {
    const int n = static_cast<int>(bits.size());
    const double total = n * bit_interval;
    const int samples = static_cast<int>(std::floor(total / controls.dt)) + 1;

    ReactiveSphere body{{hop.distance, 0, 0}, hop.receiver.radius,
                        hop.receiver.k_on, hop.receiver.k_off};
    const StepParams params = make_step_params(hop.diffusion, body, controls);

    std::vector<int> diff(static_cast<size_t>(samples) + 1, 0);
    std::vector<std::int64_t> cum(static_cast<size_t>(n) + 1, 0);
    for (int slot = 1; slot <= n; ++slot) {
        if (bits[static_cast<size_t>(slot - 1)] != 1) continue;
        const double t0 = (slot - 1) * bit_interval;
        for (int m = 0; m < molecules_per_one; ++m) {
            Xoshiro256pp rng(derive_stream(controls.seed, snapshot_index, 0xA0,
                                           static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{0, 0, 0}, t0, total, params, rng,
                              [&](double t_on, double t_off) {
                                  mark_trace(diff, controls.dt, t_on, t_off,
                                             samples);
                                  for (int j = 1; j <= n; ++j) {
                                      const double u = j * bit_interval;
                                      if (t_on <= u && u < t_off)
                                          ++cum[static_cast<size_t>(j)];
                                  }
                              });
        }
    }

    HopTrace trace;
    trace.sample_dt = controls.dt;
    trace.complex_count.resize(static_cast<size_t>(samples));
    int running = 0;
    for (int k = 0; k < samples; ++k) {
        running += diff[static_cast<size_t>(k)];
        trace.complex_count[static_cast<size_t>(k)] = running;
    }
    trace.slot_counts.resize(static_cast<size_t>(n));
    for (int j = 1; j <= n; ++j)
        trace.slot_counts[static_cast<size_t>(j - 1)] = static_cast<int>(
            cum[static_cast<size_t>(j)] - cum[static_cast<size_t>(j - 1)]);
    return trace;
}

void validate_hop_args(const HopChannel& hop, const std::vector<int>& bits,
                       int molecules_per_one, double bit_interval,
                       const SimControls& controls) {
    hop.validate();
    controls.validate();
    if (bits.empty()) throw std::domain_error("bit sequence must be nonempty");
    for (int b : bits)
        if (b != 0 && b != 1) throw std::domain_error("bits must be 0 or 1");
    if (molecules_per_one < 0)
        throw std::domain_error("molecules_per_one must be >= 0");
    if (!(bit_interval > 0))
        throw std::domain_error("bit_interval must be > 0");
}

}  // namespace

HopTrace simulate_hop(const HopChannel& hop, const std::vector<int>& bits,
                      int molecules_per_one, double bit_interval,
                      const SimControls& controls,
                      std::uint64_t snapshot_index) {
    validate_hop_args(hop, bits, molecules_per_one, bit_interval, controls);
    return simulate_hop_impl(hop, bits, molecules_per_one, bit_interval,
                             controls, snapshot_index);
}

std::vector<std::vector<int>> run_hop_ensemble_serial(
    const HopChannel& hop, const std::vector<int>& bits,
    int molecules_per_one, double bit_interval, const SimControls& controls) {
    validate_hop_args(hop, bits, molecules_per_one, bit_interval, controls);
    std::vector<std::vector<int>> rows(
        static_cast<size_t>(controls.snapshots));
    for (int s = 0; s < controls.snapshots; ++s)
        rows[static_cast<size_t>(s)] =
            simulate_hop_impl(hop, bits, molecules_per_one, bit_interval,
                              controls, static_cast<std::uint64_t>(s))
                .slot_counts;
    return rows;
}

std::vector<std::vector<int>> run_hop_ensemble(const HopChannel& hop,
                                               const std::vector<int>& bits,
                                               int molecules_per_one,
                                               double bit_interval,
                                               const SimControls& controls) {
    validate_hop_args(hop, bits, molecules_per_one, bit_interval, controls);
    std::vector<std::vector<int>> rows(
        static_cast<size_t>(controls.snapshots));
#ifdef _OPENMP
    const int nt = controls.threads > 0 ? controls.threads
                                        : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 4) num_threads(nt)
#endif
    for (int s = 0; s < controls.snapshots; ++s)
        rows[static_cast<size_t>(s)] =
            simulate_hop_impl(hop, bits, molecules_per_one, bit_interval,
                              controls, static_cast<std::uint64_t>(s))
                .slot_counts;
    return rows;
}

BerResult simulate_two_hop_ber_serial(const SimConfig& config) {
    validate_ber_config(config);
    const std::int64_t n1 = ones_snapshot_count(config);
    Tally tally;
    for (std::int64_t s = 0; s < config.controls.snapshots; ++s)
        run_snapshot(config, s < n1 ? 1 : 0, static_cast<std::uint64_t>(s),
                     tally);
    return finish_ber(tally);
}

BerResult simulate_two_hop_ber(const SimConfig& config) {
    validate_ber_config(config);
    const std::int64_t n1 = ones_snapshot_count(config);
    Tally total;
#ifdef _OPENMP
    const int nt = config.controls.threads > 0 ? config.controls.threads
                                               : omp_get_max_threads();
#pragma omp parallel num_threads(nt)
    {
        Tally local;
#pragma omp for schedule(dynamic, 4)
        for (std::int64_t s = 0; s < config.controls.snapshots; ++s)
            run_snapshot(config, s < n1 ? 1 : 0, static_cast<std::uint64_t>(s),
                         local);
#pragma omp critical
        total.merge(local);
    }
#else
    for (std::int64_t s = 0; s < config.controls.snapshots; ++s)
        run_snapshot(config, s < n1 ? 1 : 0, static_cast<std::uint64_t>(s),
                     total);
#endif
    return finish_ber(total);
}

TwoHopTrace trace_two_hop_snapshot(const SimConfig& config, int source_bit,
                                   std::uint64_t snapshot_index) {
    validate_ber_config(config);
    const LinkConfig& link = config.link;
    const SimControls& ctl = config.controls;
    const int n = link.eval_slot;
    const double tb = link.bit_interval;
    const double total = (n + 1) * tb;
    const int samples = static_cast<int>(std::floor(total / ctl.dt)) + 1;

    std::vector<int> source_bits = link.prefix;
    source_bits.push_back(source_bit);

    const StepParams pa = make_step_params(link.diffusion, relay_body(link), ctl);
    const StepParams pb = make_step_params(link.diffusion, dest_body(link), ctl);

    std::vector<int> diff_a(static_cast<size_t>(samples) + 1, 0);
    std::vector<int> diff_b(static_cast<size_t>(samples) + 1, 0);
    std::vector<std::int64_t> cum_a(static_cast<size_t>(n) + 2, 0);

    for (int slot = 1; slot <= n; ++slot) {
        if (source_bits[static_cast<size_t>(slot - 1)] != 1) continue;
        const double t0 = (slot - 1) * tb;
        for (int m = 0; m < link.n_a; ++m) {
            Xoshiro256pp rng(derive_stream(ctl.seed, snapshot_index, 0xA0,
                                           static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{0, 0, 0}, t0, total, pa, rng,
                              [&](double t_on, double t_off) {
                                  mark_trace(diff_a, ctl.dt, t_on, t_off,
                                             samples);
                                  for (int j = 1; j <= n; ++j) {
                                      const double u = j * tb;
                                      if (t_on <= u && u < t_off)
                                          ++cum_a[static_cast<size_t>(j)];
                                  }
                              });
        }
    }
    std::vector<int> relay_tx(static_cast<size_t>(n) + 2, 0);
    for (int j = 1; j <= n; ++j) {
        const std::int64_t net =
            cum_a[static_cast<size_t>(j)] - cum_a[static_cast<size_t>(j - 1)];
        relay_tx[static_cast<size_t>(j + 1)] = detect(net, *link.tau_r);
    }
    for (int slot = 2; slot <= n + 1; ++slot) {
        if (relay_tx[static_cast<size_t>(slot)] != 1) continue;
        const double t0 = (slot - 1) * tb;
        for (int m = 0; m < link.n_b; ++m) {
            Xoshiro256pp rng(derive_stream(ctl.seed, snapshot_index, 0xB0,
                                           static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{link.d_sr, 0, 0}, t0, total, pb, rng,
                              [&](double t_on, double t_off) {
                                  mark_trace(diff_b, ctl.dt, t_on, t_off,
                                             samples);
                              });
        }
    }

    TwoHopTrace trace;
    trace.sample_dt = ctl.dt;
    trace.complexes_relay.resize(static_cast<size_t>(samples));
    trace.complexes_dest.resize(static_cast<size_t>(samples));
    int run_a = 0, run_b = 0;
    for (int k = 0; k < samples; ++k) {
        run_a += diff_a[static_cast<size_t>(k)];
        run_b += diff_b[static_cast<size_t>(k)];
        trace.complexes_relay[static_cast<size_t>(k)] = run_a;
        trace.complexes_dest[static_cast<size_t>(k)] = run_b;
    }
    return trace;
}

namespace {

std::vector<PsiEstimate> finish_psi(const std::vector<double>& t_grid,
                                    const std::vector<std::int64_t>& counts,
                                    int molecules) {
    std::vector<PsiEstimate> out(t_grid.size());
    for (size_t i = 0; i < t_grid.size(); ++i) {
        const double p = static_cast<double>(counts[i]) /
                         static_cast<double>(molecules);
        out[i] = {t_grid[i], p,
                  std::sqrt(std::max(p * (1.0 - p), 0.0) /
                            static_cast<double>(molecules))};
    }
    return out;
}

void validate_psi_args(const HopChannel& hop,
                       const std::vector<double>& t_grid, int molecules,
                       const SimControls& controls) {
    hop.validate();
    controls.validate();
    if (molecules < 1)
        throw std::domain_error("estimate_psi_mc: molecules >= 1");
    if (t_grid.empty())
        throw std::domain_error("estimate_psi_mc: empty time grid");
    for (size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > 0.0))
            throw std::domain_error("estimate_psi_mc: times must be > 0");
        if (i > 0 && t_grid[i] <= t_grid[i - 1])
            throw std::domain_error(
                "estimate_psi_mc: time grid must be strictly increasing");
    }
}

// Adds the grid indices covered by one bound interval.
void count_interval(const std::vector<double>& t_grid,
                    std::vector<std::int64_t>& counts, double t_on,
                    double t_off) {
    auto first = std::lower_bound(t_grid.begin(), t_grid.end(), t_on);
    for (auto it = first; it != t_grid.end() && *it < t_off; ++it)
        ++counts[static_cast<size_t>(it - t_grid.begin())];
}

}  // namespace

std::vector<PsiEstimate> estimate_psi_mc_serial(
    const HopChannel& hop, const std::vector<double>& t_grid, int molecules,
    const SimControls& controls) {
    validate_psi_args(hop, t_grid, molecules, controls);
    ReactiveSphere body{{0, 0, 0}, hop.receiver.radius, hop.receiver.k_on,
                        hop.receiver.k_off};
    const StepParams params = make_step_params(hop.diffusion, body, controls);
    const double horizon = t_grid.back();
    std::vector<std::int64_t> counts(t_grid.size(), 0);
    for (int m = 0; m < molecules; ++m) {
        Xoshiro256pp rng(derive_stream(controls.seed, 0x51, 0, 0,
                                       static_cast<std::uint64_t>(m)));
        simulate_molecule(Vec3{hop.distance, 0, 0}, 0.0, horizon, params, rng,
                          [&](double t_on, double t_off) {
                              count_interval(t_grid, counts, t_on, t_off);
                          });
    }
    return finish_psi(t_grid, counts, molecules);
}

std::vector<PsiEstimate> estimate_psi_mc(const HopChannel& hop,
                                         const std::vector<double>& t_grid,
                                         int molecules,
                                         const SimControls& controls) {
    validate_psi_args(hop, t_grid, molecules, controls);
    ReactiveSphere body{{0, 0, 0}, hop.receiver.radius, hop.receiver.k_on,
                        hop.receiver.k_off};
    const StepParams params = make_step_params(hop.diffusion, body, controls);
    const double horizon = t_grid.back();
    std::vector<std::int64_t> counts(t_grid.size(), 0);
#ifdef _OPENMP
    const int nt = controls.threads > 0 ? controls.threads
                                        : omp_get_max_threads();
#pragma omp parallel num_threads(nt)
    {
        std::vector<std::int64_t> local(t_grid.size(), 0);
#pragma omp for schedule(dynamic, 256)
        for (int m = 0; m < molecules; ++m) {
            Xoshiro256pp rng(derive_stream(controls.seed, 0x51, 0, 0,
                                           static_cast<std::uint64_t>(m)));
            simulate_molecule(Vec3{hop.distance, 0, 0}, 0.0, horizon, params,
                              rng, [&](double t_on, double t_off) {
                                  count_interval(t_grid, local, t_on, t_off);
                              });
        }
#pragma omp critical
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += local[i];
    }
#else
    for (int m = 0; m < molecules; ++m) {
        Xoshiro256pp rng(derive_stream(controls.seed, 0x51, 0, 0,
                                       static_cast<std::uint64_t>(m)));
        simulate_molecule(Vec3{hop.distance, 0, 0}, 0.0, horizon, params, rng,
                          [&](double t_on, double t_off) {
                              count_interval(t_grid, counts, t_on, t_off);
                          });
    }
#endif
    return finish_psi(t_grid, counts, molecules);
}

}  // namespace mcdf
