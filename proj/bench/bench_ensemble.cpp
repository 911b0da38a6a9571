// Times the OpenMP ensemble drivers against their serial reference
// implementations and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mcdf/link.hpp"
#include "mcdf/sim.hpp"

using namespace mcdf;
namespace chrono = std::chrono;

static double seconds_since(chrono::steady_clock::time_point t0) {
    return chrono::duration<double>(chrono::steady_clock::now() - t0).count();
}

int main(int argc, char** argv) {
    const int snapshots = argc > 1 ? std::atoi(argv[1]) : 200;
    const int molecules = argc > 2 ? std::atoi(argv[2]) : 200000;

#ifdef _OPENMP
    std::printf("OpenMP max threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both paths run serially\n");
#endif

    LinkConfig link;
    const ThresholdSearch best = optimize_thresholds(link);
    link.tau_r = best.tau_r;
    link.tau_d = best.tau_d;

    SimConfig cfg{link, SimControls{}};
    cfg.controls.snapshots = snapshots;
    cfg.controls.seed = 1234;

    std::printf("two-hop BER, %d snapshots:\n", snapshots);
    auto t0 = chrono::steady_clock::now();
    const BerResult serial = simulate_two_hop_ber_serial(cfg);
    const double t_serial = seconds_since(t0);
    t0 = chrono::steady_clock::now();
    const BerResult parallel = simulate_two_hop_ber(cfg);
    const double t_parallel = seconds_since(t0);
    std::printf("  serial   %.3f s   pe = %.6g\n", t_serial, serial.pe);
    std::printf("  parallel %.3f s   pe = %.6g   speedup %.2fx\n", t_parallel,
                parallel.pe, t_serial / t_parallel);
    if (serial.errors != parallel.errors ||
        serial.snapshots != parallel.snapshots) {
        std::printf("MISMATCH between serial and parallel results\n");
        return 1;
    }

    HopChannel hop = link.first_hop();
    std::vector<double> grid = {0.1, 0.3, 0.5, 0.7};
    SimControls ctl;
    ctl.seed = 99;
    std::printf("binding-response estimate, %d molecules:\n", molecules);
    t0 = chrono::steady_clock::now();
    const auto est_serial = estimate_psi_mc_serial(hop, grid, molecules, ctl);
    const double p_serial = seconds_since(t0);
    t0 = chrono::steady_clock::now();
    const auto est_parallel = estimate_psi_mc(hop, grid, molecules, ctl);
    const double p_parallel = seconds_since(t0);
    std::printf("  serial   %.3f s   psi(0.7) = %.6f\n", p_serial,
                est_serial.back().psi_hat);
    std::printf("  parallel %.3f s   psi(0.7) = %.6f   speedup %.2fx\n",
                p_parallel, est_parallel.back().psi_hat,
                p_serial / p_parallel);
    for (size_t i = 0; i < grid.size(); ++i)
        if (est_serial[i].psi_hat != est_parallel[i].psi_hat) {
            std::printf("MISMATCH at t = %g\n", grid[i]);
            return 1;
        }
    std::printf("serial and parallel results identical\n");
    return 0;
}
