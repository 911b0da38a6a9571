#include "mcdf/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mcdf {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& name, int line,
                       const std::string& msg) {
    throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& name, int line, const std::string& v) {
    try {
        size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail(name, line, "expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& name, int line, const std::string& v) {
    try {
        size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail(name, line, "expected an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& name, int line, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(name, line, "expected true/false, got '" + v + "'");
}

std::vector<int> parse_bits(const std::string& name, int line,
                            const std::string& v) {
    std::vector<int> bits;
    std::istringstream in(v);
    std::string tok;
    while (in >> tok) {
        if (tok == "0")
            bits.push_back(0);
        else if (tok == "1")
            bits.push_back(1);
        else
            fail(name, line, "prefix must be space-separated 0/1 bits");
    }
    return bits;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::pair<int, int> ToolConfig::tau_range_or_default() const {
    if (tau_min && tau_max) return {*tau_min, *tau_max};
    const auto def = default_tau_range(link);
    return {tau_min.value_or(def.first), tau_max.value_or(def.second)};
}

void ToolConfig::validate() const {
    link.validate();
    sim.validate();
    if (tau_min && tau_max && *tau_max < *tau_min)
        throw ConfigError("thresholds: tau_max < tau_min");
}

ToolConfig parse_config(const std::string& text, const std::string& name) {
    ToolConfig cfg;
    bool p1_set = false, p0_set = false;
    double p0 = 0.5, p1 = 0.5;
    bool eval_slot_set = false;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const size_t hash = s.find_first_of("#;");
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(name, line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "topology" && section != "medium" &&
                section != "kinetics" && section != "protocol" &&
                section != "thresholds" && section != "analysis" &&
                section != "simulation" && section != "run")
                fail(name, line, "unknown section [" + section + "]");
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            fail(name, line, "expected 'key = value', got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string val = trim(s.substr(eq + 1));
        if (key.empty() || val.empty())
            fail(name, line, "empty key or value");

        if (section == "run") continue;  // manifest metadata, not config

        if (section == "topology") {
            if (key == "d_sd") cfg.link.d_sd = parse_double(name, line, val);
            else if (key == "d_sr") cfg.link.d_sr = parse_double(name, line, val);
            else if (key == "r_r") cfg.link.r_r = parse_double(name, line, val);
            else if (key == "r_d") cfg.link.r_d = parse_double(name, line, val);
            else fail(name, line, "unknown key '" + key + "' in [topology]");
        } else if (section == "medium") {
            if (key == "diffusion")
                cfg.link.diffusion = parse_double(name, line, val);
            else fail(name, line, "unknown key '" + key + "' in [medium]");
        } else if (section == "kinetics") {
            if (key == "k_on") {
                cfg.link.relay_k_on = parse_double(name, line, val);
                cfg.link.dest_k_on = cfg.link.relay_k_on;
            } else if (key == "k_off") {
                cfg.link.relay_k_off = parse_double(name, line, val);
                cfg.link.dest_k_off = cfg.link.relay_k_off;
            } else if (key == "relay_k_on")
                cfg.link.relay_k_on = parse_double(name, line, val);
            else if (key == "relay_k_off")
                cfg.link.relay_k_off = parse_double(name, line, val);
            else if (key == "dest_k_on")
                cfg.link.dest_k_on = parse_double(name, line, val);
            else if (key == "dest_k_off")
                cfg.link.dest_k_off = parse_double(name, line, val);
            else fail(name, line, "unknown key '" + key + "' in [kinetics]");
        } else if (section == "protocol") {
            if (key == "bit_interval")
                cfg.link.bit_interval = parse_double(name, line, val);
            else if (key == "n_a")
                cfg.link.n_a = static_cast<int>(parse_int(name, line, val));
            else if (key == "n_b")
                cfg.link.n_b = static_cast<int>(parse_int(name, line, val));
            else if (key == "p0") { p0 = parse_double(name, line, val); p0_set = true; }
            else if (key == "p1") { p1 = parse_double(name, line, val); p1_set = true; }
            else if (key == "prefix")
                cfg.link.prefix = parse_bits(name, line, val);
            else if (key == "eval_slot") {
                cfg.link.eval_slot = static_cast<int>(parse_int(name, line, val));
                eval_slot_set = true;
            } else fail(name, line, "unknown key '" + key + "' in [protocol]");
        } else if (section == "thresholds") {
            if (key == "tau_r")
                cfg.link.tau_r = static_cast<int>(parse_int(name, line, val));
            else if (key == "tau_d")
                cfg.link.tau_d = static_cast<int>(parse_int(name, line, val));
            else if (key == "tau_min")
                cfg.tau_min = static_cast<int>(parse_int(name, line, val));
            else if (key == "tau_max")
                cfg.tau_max = static_cast<int>(parse_int(name, line, val));
            else fail(name, line, "unknown key '" + key + "' in [thresholds]");
        } else if (section == "analysis") {
            if (key == "quad_tol")
                cfg.link.quad_tol = parse_double(name, line, val);
            else if (key == "strict_relay_isi")
                cfg.link.strict_relay_isi = parse_bool(name, line, val);
            else fail(name, line, "unknown key '" + key + "' in [analysis]");
        } else if (section == "simulation") {
            if (key == "dt") cfg.sim.dt = parse_double(name, line, val);
            else if (key == "snapshots")
                cfg.sim.snapshots = static_cast<int>(parse_int(name, line, val));
            else if (key == "seed")
                cfg.sim.seed = static_cast<std::uint64_t>(
                    parse_int(name, line, val));
            else if (key == "boundary_rule") {
                if (val != "erban-chapman")
                    fail(name, line, "unknown boundary_rule '" + val + "'");
                cfg.sim.boundary_rule = BoundaryRule::ErbanChapman;
            } else if (key == "desorb_placement") {
                if (val == "surface-offset")
                    cfg.sim.desorb_placement = DesorbPlacement::SurfaceOffset;
                else if (val == "fixed-epsilon")
                    cfg.sim.desorb_placement = DesorbPlacement::FixedEpsilon;
                else fail(name, line, "unknown desorb_placement '" + val + "'");
            } else if (key == "desorb_epsilon")
                cfg.sim.desorb_epsilon = parse_double(name, line, val);
            else if (key == "contact_p_max")
                cfg.sim.contact_p_max = parse_double(name, line, val);
            else if (key == "guard_sigmas")
                cfg.sim.guard_sigmas = parse_double(name, line, val);
            else if (key == "threads")
                cfg.sim.threads = static_cast<int>(parse_int(name, line, val));
            else fail(name, line, "unknown key '" + key + "' in [simulation]");
        } else {
            fail(name, line, "key '" + key + "' outside of any section");
        }
    }

    if (p0_set && p1_set) {
        if (std::abs(p0 + p1 - 1.0) > 1e-12)
            throw ConfigError(name + ": p0 + p1 must equal 1");
    } else if (p0_set) {
        p1 = 1.0 - p0;
    } else if (p1_set) {
        p0 = 1.0 - p1;
    }
    cfg.link.p0 = p0;
    cfg.link.p1 = p1;
    if (!eval_slot_set)
        cfg.link.eval_slot = static_cast<int>(cfg.link.prefix.size()) + 1;

    cfg.validate();
    return cfg;
}

ToolConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::string render_config(const ToolConfig& c) {
    std::ostringstream out;
    out << "[topology]\n";
    out << "d_sd = " << fmt(c.link.d_sd) << "\n";
    out << "d_sr = " << fmt(c.link.d_sr) << "\n";
    out << "r_r = " << fmt(c.link.r_r) << "\n";
    out << "r_d = " << fmt(c.link.r_d) << "\n\n";
    out << "[medium]\n";
    out << "diffusion = " << fmt(c.link.diffusion) << "\n\n";
    out << "[kinetics]\n";
    out << "relay_k_on = " << fmt(c.link.relay_k_on) << "\n";
    out << "relay_k_off = " << fmt(c.link.relay_k_off) << "\n";
    out << "dest_k_on = " << fmt(c.link.dest_k_on) << "\n";
    out << "dest_k_off = " << fmt(c.link.dest_k_off) << "\n\n";
    out << "[protocol]\n";
    out << "bit_interval = " << fmt(c.link.bit_interval) << "\n";
    out << "n_a = " << c.link.n_a << "\n";
    out << "n_b = " << c.link.n_b << "\n";
    out << "p0 = " << fmt(c.link.p0) << "\n";
    out << "p1 = " << fmt(c.link.p1) << "\n";
    out << "prefix =";
    for (int b : c.link.prefix) out << " " << b;
    out << "\n";
    out << "eval_slot = " << c.link.eval_slot << "\n\n";
    out << "[thresholds]\n";
    if (c.link.tau_r) out << "tau_r = " << *c.link.tau_r << "\n";
    if (c.link.tau_d) out << "tau_d = " << *c.link.tau_d << "\n";
    if (c.tau_min) out << "tau_min = " << *c.tau_min << "\n";
    if (c.tau_max) out << "tau_max = " << *c.tau_max << "\n";
    out << "\n[analysis]\n";
    out << "quad_tol = " << fmt(c.link.quad_tol) << "\n";
    out << "strict_relay_isi = "
        << (c.link.strict_relay_isi ? "true" : "false") << "\n\n";
    out << "[simulation]\n";
    out << "dt = " << fmt(c.sim.dt) << "\n";
    out << "snapshots = " << c.sim.snapshots << "\n";
    out << "seed = " << c.sim.seed << "\n";
    out << "boundary_rule = erban-chapman\n";
    out << "desorb_placement = "
        << (c.sim.desorb_placement == DesorbPlacement::SurfaceOffset
                ? "surface-offset"
                : "fixed-epsilon")
        << "\n";
    out << "desorb_epsilon = " << fmt(c.sim.desorb_epsilon) << "\n";
    out << "contact_p_max = " << fmt(c.sim.contact_p_max) << "\n";
    out << "guard_sigmas = " << fmt(c.sim.guard_sigmas) << "\n";
    out << "threads = " << c.sim.threads << "\n";
    return out.str();
}

std::string render_manifest(const ToolConfig& config, const RunInfo& info) {
    std::ostringstream out;
    out << "[run]\n";
    out << "tool_version = " << info.tool_version << "\n";
    out << "command_line = " << info.command_line << "\n";
    out << "timestamp = " << info.timestamp << "\n";
    for (const auto& o : info.outputs) out << "output = " << o << "\n";
    out << "\n" << render_config(config);
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file '" + path + "'");
    out << content;
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace mcdf
