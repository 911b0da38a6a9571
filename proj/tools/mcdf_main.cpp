// Command-line front end: analytical link evaluation, Monte Carlo
// simulation, parameter sweeps, and the direct-transmission comparison.
// Every CSV output gets a sibling .manifest file that reproduces the run
// byte-for-byte when passed back through --config.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcdf/config.hpp"
#include "mcdf/csv.hpp"
#include "mcdf/link.hpp"
#include "mcdf/sim.hpp"

namespace {

using namespace mcdf;

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    return out;
}

struct Common {
    std::string config_path;
    std::string out_path;
    std::string command_line;
    std::optional<std::uint64_t> seed;
    std::optional<int> snapshots;
    std::optional<int> threads;

    ToolConfig resolve() const {
        ToolConfig cfg =
            config_path.empty() ? ToolConfig{} : load_config(config_path);
        if (seed) cfg.sim.seed = *seed;
        if (snapshots) cfg.sim.snapshots = *snapshots;
        if (threads) cfg.sim.threads = *threads;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path,
                    "configuration file (defaults used when omitted)");
    cmd->add_option("--out", c.out_path, "output CSV path");
    cmd->add_option("--seed", c.seed, "Monte Carlo seed override");
    cmd->add_option("--snapshots", c.snapshots, "snapshot count override");
    cmd->add_option("--threads", c.threads, "worker thread count (0 = auto)")
        ->envname("MCDF_THREADS");
}

void emit(const Common& c, const ToolConfig& cfg, const std::string& csv,
          const std::string& default_name) {
    const std::string path = c.out_path.empty() ? default_name : c.out_path;
    write_file(path, csv);
    RunInfo info{kToolVersion, c.command_line, timestamp_utc(), {path}};
    write_file(path + ".manifest", render_manifest(cfg, info));
    std::printf("wrote %s (+ %s.manifest)\n", path.c_str(), path.c_str());
}

// Thresholds from the config when fixed, otherwise the grid optimum.
ThresholdSearch resolve_thresholds(const ToolConfig& cfg) {
    if (cfg.link.tau_r && cfg.link.tau_d) {
        LinkConfig c = cfg.link;
        const ErrorBreakdown b = two_hop_error(c);
        return {*cfg.link.tau_r, *cfg.link.tau_d, b.pe};
    }
    return optimize_thresholds(cfg.link, cfg.tau_range_or_default());
}

int cmd_psi(const Common& common, double t_min, double t_max, int points,
            const std::string& hop_name, bool mc_validate, int mc_molecules) {
    const ToolConfig cfg = common.resolve();
    if (!(t_min > 0.0))
        throw ConfigError("psi: t_min must be > 0");
    if (!(t_max > t_min)) throw ConfigError("psi: need t_max > t_min");
    if (points < 2) throw ConfigError("psi: need at least 2 points");

    HopChannel hop;
    if (hop_name == "first") hop = cfg.link.first_hop();
    else if (hop_name == "second") hop = cfg.link.second_hop();
    else if (hop_name == "direct")
        hop = HopChannel{cfg.link.diffusion, cfg.link.d_sd,
                         ReceiverKinetics{cfg.link.r_d, cfg.link.dest_k_on,
                                          cfg.link.dest_k_off}};
    else throw ConfigError("psi: unknown hop '" + hop_name + "'");

    std::vector<double> grid(static_cast<size_t>(points));
    for (int i = 0; i < points; ++i)
        grid[static_cast<size_t>(i)] =
            t_min + (t_max - t_min) * i / (points - 1);

    std::vector<PsiEstimate> mc;
    if (mc_validate) mc = estimate_psi_mc(hop, grid, mc_molecules, cfg.sim);

    CsvBuilder csv(mc_validate
                       ? std::initializer_list<std::string>{"t_s",
                                                            "psi_analytical",
                                                            "psi_mc",
                                                            "std_err"}
                       : std::initializer_list<std::string>{"t_s",
                                                            "psi_analytical"});
    for (size_t i = 0; i < grid.size(); ++i) {
        const double psi = binding_response(grid[i], hop, cfg.link.quad_tol);
        if (mc_validate)
            csv.append_row({CsvBuilder::analytical(grid[i]),
                            CsvBuilder::analytical(psi),
                            CsvBuilder::estimate(mc[i].psi_hat),
                            CsvBuilder::estimate(mc[i].std_err)});
        else
            csv.append_row({CsvBuilder::analytical(grid[i]),
                            CsvBuilder::analytical(psi)});
    }
    emit(common, cfg, csv.str(), "psi.csv");
    return 0;
}

int cmd_ber(const Common& common, const std::string& mode,
            const std::string& trace_path) {
    const ToolConfig cfg = common.resolve();
    if (mode != "analytical" && mode != "simulate" && mode != "both")
        throw ConfigError("ber: unknown mode '" + mode + "'");
    const bool analytical = mode != "simulate";
    const bool simulate = mode != "analytical";

    const ThresholdSearch taus = resolve_thresholds(cfg);
    LinkConfig fixed = cfg.link;
    fixed.tau_r = taus.tau_r;
    fixed.tau_d = taus.tau_d;
    std::printf("thresholds: tau_r=%d tau_d=%d\n", taus.tau_r, taus.tau_d);

    ErrorBreakdown b;
    if (analytical) {
        b = two_hop_error(fixed);
        std::printf("analytical pe = %.12g\n", b.pe);
    }
    BerResult sim;
    if (simulate) {
        SimConfig sc{fixed, cfg.sim};
        sim = simulate_two_hop_ber(sc);
        std::printf("simulated  pe = %.6g  (95%% CI [%.6g, %.6g], %lld/%lld "
                    "errors)\n",
                    sim.pe, sim.ci_low, sim.ci_high,
                    static_cast<long long>(sim.errors),
                    static_cast<long long>(sim.snapshots));
        if (!trace_path.empty()) {
            const TwoHopTrace trace = trace_two_hop_snapshot(
                SimConfig{fixed, cfg.sim}, 1, 0);
            CsvBuilder tcsv({"time_s", "complexes_R", "complexes_D"});
            for (size_t k = 0; k < trace.complexes_relay.size(); ++k)
                tcsv.append_row(
                    {CsvBuilder::analytical(k * trace.sample_dt),
                     CsvBuilder::integer(trace.complexes_relay[k]),
                     CsvBuilder::integer(trace.complexes_dest[k])});
            write_file(trace_path, tcsv.str());
            std::printf("wrote %s\n", trace_path.c_str());
        }
    }
    if (analytical && simulate) {
        const bool inside = b.pe >= sim.ci_low && b.pe <= sim.ci_high;
        std::printf("analytical pe %s the simulated 95%% CI\n",
                    inside ? "inside" : "OUTSIDE");
    }

    std::vector<std::string> header{"tau_r", "tau_d"};
    std::vector<std::string> row{CsvBuilder::integer(taus.tau_r),
                                 CsvBuilder::integer(taus.tau_d)};
    if (analytical) {
        for (const char* name : {"pe_analytical", "p_s1r0", "p_s0r1", "p_s1r1",
                                 "p_s0r0", "p_r1d0", "p_r0d1", "p_r1d1",
                                 "p_r0d0"})
            header.push_back(name);
        for (double v : {b.pe, b.p_s1r0, b.p_s0r1, b.p_s1r1, b.p_s0r0,
                         b.p_r1d0, b.p_r0d1, b.p_r1d1, b.p_r0d0})
            row.push_back(CsvBuilder::analytical(v));
    }
    if (simulate) {
        for (const char* name : {"pe_sim", "ci_low", "ci_high", "errors",
                                 "snapshots"})
            header.push_back(name);
        row.push_back(CsvBuilder::estimate(sim.pe));
        row.push_back(CsvBuilder::estimate(sim.ci_low));
        row.push_back(CsvBuilder::estimate(sim.ci_high));
        row.push_back(CsvBuilder::integer(sim.errors));
        row.push_back(CsvBuilder::integer(sim.snapshots));
    }
    std::string text;
    for (size_t i = 0; i < header.size(); ++i)
        text += (i ? "," : "") + header[i];
    text += "\n";
    for (size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + row[i];
    text += "\n";
    emit(common, cfg, text, "ber.csv");
    return 0;
}

int cmd_sweep(const Common& common, const std::string& axis,
              const std::string& ratios_arg, const std::string& na_arg,
              const std::string& kon_arg, const std::string& koff_arg,
              bool simulate) {
    const ToolConfig cfg = common.resolve();

    auto simulate_point = [&](const LinkConfig& link, int tau_r, int tau_d,
                              std::vector<std::string>& row) {
        LinkConfig fixed = link;
        fixed.tau_r = tau_r;
        fixed.tau_d = tau_d;
        const BerResult r = simulate_two_hop_ber(SimConfig{fixed, cfg.sim});
        row.push_back(CsvBuilder::estimate(r.pe));
        row.push_back(CsvBuilder::estimate(r.ci_low));
        row.push_back(CsvBuilder::estimate(r.ci_high));
    };

    std::string text;
    if (axis == "relay-position") {
        std::vector<double> ratios = ratios_arg.empty()
                                         ? std::vector<double>{0.2, 0.3, 0.4,
                                                               0.5, 0.6, 0.7,
                                                               0.8}
                                         : parse_list(ratios_arg);
        const auto table = sweep_relay_position(cfg.link, ratios);
        text = simulate ? "ratio,d_sr_um,tau_r,tau_d,pe,pe_sim,ci_low,ci_high\n"
                        : "ratio,d_sr_um,tau_r,tau_d,pe\n";
        for (const auto& p : table) {
            std::vector<std::string> row{
                CsvBuilder::analytical(p.ratio),
                CsvBuilder::analytical(p.ratio * cfg.link.d_sd),
                CsvBuilder::integer(p.tau_r), CsvBuilder::integer(p.tau_d),
                CsvBuilder::analytical(p.pe)};
            if (simulate) {
                LinkConfig link = cfg.link;
                link.d_sr = p.ratio * cfg.link.d_sd;
                simulate_point(link, p.tau_r, p.tau_d, row);
            }
            for (size_t i = 0; i < row.size(); ++i)
                text += (i ? "," : "") + row[i];
            text += "\n";
        }
    } else if (axis == "allocation") {
        const int budget = cfg.link.n_a + cfg.link.n_b;
        std::vector<int> na_values;
        if (na_arg.empty()) {
            for (int v = 200; v <= budget - 200; v += 200)
                na_values.push_back(v);
        } else {
            for (double v : parse_list(na_arg))
                na_values.push_back(static_cast<int>(v));
        }
        const auto table = sweep_allocation(cfg.link, budget, na_values);
        text = simulate ? "n_a,n_b,tau_r,tau_d,pe,pe_sim,ci_low,ci_high\n"
                        : "n_a,n_b,tau_r,tau_d,pe\n";
        for (const auto& p : table) {
            std::vector<std::string> row{
                CsvBuilder::integer(p.n_a), CsvBuilder::integer(p.n_b),
                CsvBuilder::integer(p.tau_r), CsvBuilder::integer(p.tau_d),
                CsvBuilder::analytical(p.pe)};
            if (simulate) {
                LinkConfig link = cfg.link;
                link.n_a = p.n_a;
                link.n_b = p.n_b;
                simulate_point(link, p.tau_r, p.tau_d, row);
            }
            for (size_t i = 0; i < row.size(); ++i)
                text += (i ? "," : "") + row[i];
            text += "\n";
        }
    } else if (axis == "kon-koff-grid") {
        const std::vector<double> kons =
            kon_arg.empty() ? std::vector<double>{2e3, 1e4}
                            : parse_list(kon_arg);
        const std::vector<double> koffs =
            koff_arg.empty() ? std::vector<double>{10.0, 100.0}
                             : parse_list(koff_arg);
        text = simulate ? "k_on,k_off,tau_r,tau_d,pe,pe_sim,ci_low,ci_high\n"
                        : "k_on,k_off,tau_r,tau_d,pe\n";
        for (double kon : kons)
            for (double koff : koffs) {
                LinkConfig link = cfg.link;
                link.relay_k_on = link.dest_k_on = kon;
                link.relay_k_off = link.dest_k_off = koff;
                link.tau_r.reset();
                link.tau_d.reset();
                const ThresholdSearch best = optimize_thresholds(link);
                std::vector<std::string> row{
                    CsvBuilder::analytical(kon), CsvBuilder::analytical(koff),
                    CsvBuilder::integer(best.tau_r),
                    CsvBuilder::integer(best.tau_d),
                    CsvBuilder::analytical(best.pe)};
                if (simulate)
                    simulate_point(link, best.tau_r, best.tau_d, row);
                for (size_t i = 0; i < row.size(); ++i)
                    text += (i ? "," : "") + row[i];
                text += "\n";
            }
    } else {
        throw ConfigError("sweep: unknown axis '" + axis + "'");
    }
    emit(common, cfg, text, "sweep.csv");
    return 0;
}

int cmd_compare_direct(const Common& common, int n_direct_arg) {
    const ToolConfig cfg = common.resolve();
    const int budget = cfg.link.n_a + cfg.link.n_b;
    const int n_direct = n_direct_arg >= 0 ? n_direct_arg : budget;

    const ThresholdSearch relay = resolve_thresholds(cfg);
    const DirectResult direct = direct_error(cfg.link, n_direct);
    std::printf("relay:  tau_r=%d tau_d=%d  pe = %.12g\n", relay.tau_r,
                relay.tau_d, relay.pe);
    std::printf("direct: n=%d tau=%d      pe = %.12g\n", n_direct, direct.tau,
                direct.pe);
    if (direct.pe > 0 && relay.pe > 0)
        std::printf("relay/direct pe ratio = %.6g\n", relay.pe / direct.pe);

    CsvBuilder csv({"n_direct", "tau_direct", "pe_direct", "tau_r", "tau_d",
                    "pe_relay"});
    csv.append_row({CsvBuilder::integer(n_direct),
                    CsvBuilder::integer(direct.tau),
                    CsvBuilder::analytical(direct.pe),
                    CsvBuilder::integer(relay.tau_r),
                    CsvBuilder::integer(relay.tau_d),
                    CsvBuilder::analytical(relay.pe)});
    emit(common, cfg, csv.str(), "compare_direct.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-hop decode-and-forward molecular link: analytical "
                 "error model and Brownian-dynamics simulator"};
    app.require_subcommand(1);

    std::string full_cmd;
    for (int i = 0; i < argc; ++i) {
        if (i) full_cmd += ' ';
        full_cmd += argv[i];
    }

    Common common;
    common.command_line = full_cmd;

    auto* psi = app.add_subcommand("psi", "binding response curve");
    double t_min = 0.01, t_max = 2.1;
    int points = 50;
    std::string hop_name = "first";
    bool mc_validate = false;
    int mc_molecules = 10000;
    add_common(psi, common);
    psi->add_option("--t-min", t_min, "first time point (s)");
    psi->add_option("--t-max", t_max, "last time point (s)");
    psi->add_option("--points", points, "number of grid points");
    psi->add_option("--hop", hop_name, "first | second | direct");
    psi->add_flag("--mc-validate", mc_validate,
                  "append a Monte Carlo estimate per point");
    psi->add_option("--mc-molecules", mc_molecules,
                    "molecules for --mc-validate");

    auto* ber = app.add_subcommand("ber", "end-to-end error probability");
    std::string mode = "analytical";
    std::string trace_path;
    add_common(ber, common);
    ber->add_option("--mode", mode, "analytical | simulate | both");
    ber->add_option("--trace", trace_path,
                    "dump one snapshot's complex-count time series CSV");

    auto* sweep = app.add_subcommand("sweep", "parameter sweeps");
    std::string axis = "relay-position";
    std::string ratios_arg, na_arg, kon_arg, koff_arg;
    bool sweep_sim = false;
    add_common(sweep, common);
    sweep->add_option("--axis", axis,
                      "relay-position | allocation | kon-koff-grid");
    sweep->add_option("--ratios", ratios_arg,
                      "comma-separated d_sr/d_sd ratios");
    sweep->add_option("--na-values", na_arg, "comma-separated N_A values");
    sweep->add_option("--kon-values", kon_arg, "comma-separated k_on values");
    sweep->add_option("--koff-values", koff_arg,
                      "comma-separated k_off values");
    sweep->add_flag("--simulate", sweep_sim,
                    "append Monte Carlo pe and CI per point");

    auto* cmp = app.add_subcommand("compare-direct",
                                   "relay vs direct transmission");
    int n_direct = -1;
    add_common(cmp, common);
    cmp->add_option("--n-direct", n_direct,
                    "molecules per one for the direct link (default: "
                    "n_a + n_b)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (psi->parsed())
            return cmd_psi(common, t_min, t_max, points, hop_name, mc_validate,
                           mc_molecules);
        if (ber->parsed()) return cmd_ber(common, mode, trace_path);
        if (sweep->parsed())
            return cmd_sweep(common, axis, ratios_arg, na_arg, kon_arg,
                             koff_arg, sweep_sim);
        if (cmp->parsed()) return cmd_compare_direct(common, n_direct);
    } catch (const QuadratureError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
