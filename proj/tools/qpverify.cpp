#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "config.hpp"
#include "qpred/diophantine.hpp"
#include "qpred/errors.hpp"
#include "qpred/kg_reduce.hpp"
#include "qpred/null_chart.hpp"
#include "qpred/psdo_reduce.hpp"
#include "qpred/straighten.hpp"
#include "qpred/wave.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qpred;
using qpverify::RunConfig;

namespace {

enum Exit { pass = 0, module_error = 1, tolerance = 2, small_divisor = 3, smallness = 4, io = 5 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// one row per asserted quantity
struct Checks {
    json rows = json::array();
    bool ok = true;

    void le(const std::string& name, double value, double tol) {
        const bool p = !std::isnan(value) && value <= tol;
        rows.push_back({{"name", name}, {"value", value}, {"tolerance", tol}, {"passed", p}});
        ok = ok && p;
    }
    void flag(const std::string& name, bool p) {
        rows.push_back({{"name", name}, {"passed", p}});
        ok = ok && p;
    }
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    return out;
}

StraightenOptions straighten_options(const RunConfig& cfg) {
    StraightenOptions o;
    o.smallness = cfg.smallness;
    return o;
}

std::vector<double> line_from_rows(const std::vector<std::array<double, 3>>& rows, int grid) {
    std::vector<double> v(grid, 0.0);
    for (int i = 0; i < grid; ++i) {
        const double x = GridValues::node(i, grid);
        for (const auto& r : rows) v[i] += r[1] * std::cos(r[0] * x) + r[2] * std::sin(r[0] * x);
    }
    return v;
}

void run_straighten(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    const auto w = cfg.frequency();
    TorusFunction a0 = cfg.has("a0") ? cfg.coeff("a0") : cfg.coeff("A") + (cfg.has("A") ? -1.0 : 0.0);
    const auto r = straighten_newton(a0, w, straighten_options(cfg));
    const auto pf = pushforward_check(a0, r.beta, r.m_inf, w);
    rep["result"] = to_json(r);
    rep["smallness_delta"] = smallness_delta(a0, w, straighten_options(cfg).s1);
    rep["pushforward_composed"] = pf.composed;
    chk.flag("converged", r.converged);
    chk.le("pushforward_residual", pf.residual, cfg.tol.residual);
    write_json(out / "beta.json", to_json(r.beta));
}

NullChart chart_of(const RunConfig& cfg, const TorusFunction& A) {
    const auto w = cfg.frequency();
    return build_chart(A, solve_UV(A, w, straighten_options(cfg)), w, cfg.chart_bound);
}

void run_chart(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    if (!cfg.has("A")) throw qpverify::ConfigError("chart needs coefficient A");
    const TorusFunction A = cfg.coeff("A");
    const NullChart c = chart_of(cfg, A);
    const auto e = eikonal_residuals(c, A);
    const auto m = verify_metric_form(c, A, 0, cfg.tol.metric);
    rep["mode"] = c.mode == ChartMode::parity ? "parity" : "no_parity";
    rep["rho_plus"] = c.rho_plus;
    rep["rho_minus"] = c.rho_minus;
    rep["chart_smallness"] = chart_smallness(c.U, c.V, c.omega);
    rep["jacobian_min"] = chart_jacobian_min(c);
    chk.le("eikonal_u", e.u_residual, cfg.tol.eikonal);
    chk.le("eikonal_v", e.v_residual, cfg.tol.eikonal);
    chk.le("roundtrip", roundtrip_error(c.psi, c.psi_inv), cfg.tol.roundtrip);
    if (c.mode == ChartMode::parity) {
        chk.le("metric_cross", m.cross, cfg.tol.metric);
        chk.le("metric_ratio", m.ratio, cfg.tol.metric);
        const auto p = chart_parity(c);
        chk.le("parity_tau_shift", p.tau_shift, cfg.tol.parity);
        chk.le("parity_r_shift", p.r_shift, cfg.tol.parity);
        chk.le("parity_conformal", p.conformal, cfg.tol.parity);
        chk.le("v_from_u", std::max(p.v_from_u_x, p.v_from_u_phi), cfg.tol.parity);
    } else {
        chk.le("metric_tt", m.dev_tt, cfg.tol.metric);
        chk.le("metric_tr", m.dev_tr, cfg.tol.metric);
        chk.le("metric_rr", m.dev_rr, cfg.tol.metric);
    }
    write_json(out / "chart.json", to_json(c));
}

KGCoefficients kg_coefficients(const RunConfig& cfg) {
    KGCoefficients c{cfg.coeff("Bxx"), cfg.coeff("Bx"), cfg.coeff("Bt"), cfg.coeff("B"), cfg.mass};
    return c;
}

// geometric stage and time removal, with the checks of both
ReducedKG run_kg_stages(const RunConfig& cfg, Checks& chk, json& rep) {
    const auto w = cfg.frequency();
    const KGCoefficients c = kg_coefficients(cfg);
    check_parities(c, cfg.tol.parity);
    const auto split = geometric_split(c, w.omega);
    const NullChart chart = chart_of(cfg, split.A);
    const ReducedKG r = transform_coefficients(c, chart, w);
    const ReducedKG o = remove_time_derivative(r, w);
    rep["alpha"] = r.alpha;

    std::mt19937_64 rng(cfg.seed);
    double two_sided = 0, identity = 0;
    for (int t = 0; t < cfg.samples; ++t) {
        const auto phi = qpverify::random_torus(cfg.nu, 3, 3, 1.0, 0.2, rng);
        two_sided = std::max(two_sided, manufactured_check(c, chart, r, phi).two_sided);
        const auto h = qpverify::random_torus(cfg.nu, 4, 4, 1.0, 0.2, rng);
        identity = std::max(identity, operator_identity_residual(r, o, h));
    }
    chk.le("manufactured_two_sided", two_sided, cfg.tol.manufactured);
    chk.le("time_removal_identity", identity, cfg.tol.identity);
    chk.flag("tau_coefficient_zero", o.Gtau.max_abs() == 0.0);
    chk.le("reduced_parity", std::max(kg_parity(r).max(), kg_parity(o).max()), cfg.tol.parity);

    json norms = json::array();
    for (const auto& row : estimate_g_norms(r, c, w))
        norms.push_back({{"s", row.s}, {"lhs", row.lhs}, {"rhs", row.rhs}, {"ratio", row.ratio}});
    rep["g_norms"] = norms;
    return o;
}

void run_kg(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    const ReducedKG o = run_kg_stages(cfg, chk, rep);
    write_json(out / "reduced.json", to_json(o));
}

void run_psdo(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    ReducedKG r;
    if (cfg.has("GR")) {
        r.stage = KGStage::time_removed;
        r.alpha = cfg.alpha;
        r.mass = cfg.mass;
        r.omega = cfg.omega;
        r.GR = cfg.coeff("GR");
        r.G = cfg.coeff("G");
        r.Gtau = TorusFunction(cfg.nu, cfg.cutoff);
    } else {
        json kg;
        r = run_kg_stages(cfg, chk, kg);
        rep["kg"] = kg;
    }
    rep["GR_norm_s0"] = sobolev_norm(r.GR, default_s0);
    const auto p = psdo_pipeline(r, cfg.frequency(), cfg.layout, cfg.eta2);
    rep["psdo"] = to_json(p);
    chk.le("remainder_order", p.transform.order.fitted_order, cfg.tol.order);
    chk.le("T_patterns", p.transform.patterns.max(), cfg.tol.patterns);
    chk.le("T_inverse", p.transform.inverse_residual, cfg.tol.inverse);
    chk.le("V_inverse", p.vee.inverse_residual, cfg.tol.inverse);
    if (cfg.write_operators) {
        write_operator_csv(p.transform.remainder, (out / "remainder.csv").string());
        write_operator_csv(p.transform.T, (out / "T.csv").string());
    }
}

void run_scan(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    const auto& s = cfg.scan;
    const double m = s.m;
    const auto rows = measure_complement(s.lo, s.hi, [m](const std::vector<double>&) { return m; }, s.gammas,
                                         s.samples, s.cutoff, cfg.iota);
    auto csv = open_out(out / "scan.csv");
    write_measure_csv(csv, rows);
    json j = json::array();
    for (const auto& r : rows) j.push_back({{"gamma", r.gamma}, {"fraction_excluded", r.fraction_excluded}});
    rep["rows"] = j;
    // smaller gamma excludes a strictly smaller set
    bool monotone = true;
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < rows.size(); ++b)
            if (rows[a].gamma > rows[b].gamma && !(rows[a].fraction_excluded > rows[b].fraction_excluded)) monotone = false;
    chk.flag("strictly_monotone", monotone);
}

void run_evolve(const RunConfig& cfg, const fs::path& out, Checks& chk, json& rep) {
    if (!cfg.has("A")) throw qpverify::ConfigError("evolve needs coefficient A");
    const auto& e = cfg.evolve;
    const TorusFunction A = cfg.coeff("A");
    WaveOptions opt;
    opt.T = e.T;
    opt.dt = e.dt;
    opt.grid = e.grid;
    opt.record_dt = e.record_dt;
    opt.s = e.s;
    const auto st = evolve_wave(A, cfg.omega, line_from_rows(e.f, e.grid), line_from_rows(e.g, e.grid), opt);
    auto csv = open_out(out / "norms.csv");
    csv << "t,norm\n";
    for (std::size_t n = 0; n < st.times.size(); ++n) csv << st.times[n] << ',' << st.norms[n] << '\n';

    const NullChart c = chart_of(cfg, A);
    const auto ap = almost_periodic_check(st, c, e.kmax);
    double disp = 0;
    for (int k = 1; k <= e.kmax; ++k) {
        const auto [a, b] = dispersion_roots(c.rho_plus, c.rho_minus, k);
        disp = std::max({disp, std::abs(dispersion_residual(c.rho_plus, c.rho_minus, k, a)),
                         std::abs(dispersion_residual(c.rho_plus, c.rho_minus, k, b))});
    }
    rep["mode"] = c.mode == ChartMode::parity ? "parity" : "no_parity";
    rep["rho_plus"] = c.rho_plus;
    rep["rho_minus"] = c.rho_minus;
    rep["almost_periodic"] = to_json(ap);
    chk.le("sup_norm_ratio", st.sup_ratio(), cfg.tol.sup_ratio);
    chk.le("almost_periodic_residual", ap.residual_fraction, cfg.tol.almost_periodic);
    chk.le("dispersion_backsubstitution", disp, cfg.tol.dispersion);
}

json error_record(const std::exception& e, int code) {
    json j{{"error", e.what()}, {"exit_code", code}};
    if (const auto* sd = dynamic_cast<const SmallDivisorError*>(&e)) {
        j["type"] = "SmallDivisorError";
        j["worst_mode"] = sd->mode;
        j["divisor"] = sd->divisor;
    } else if (dynamic_cast<const SmallnessError*>(&e)) {
        j["type"] = "SmallnessError";
    } else if (dynamic_cast<const NotDiffeoError*>(&e)) {
        j["type"] = "NotDiffeoError";
    } else if (dynamic_cast<const qpverify::ConfigError*>(&e)) {
        j["type"] = "ConfigError";
    } else if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
        j["type"] = "IoError";
    } else {
        j["type"] = "Error";
    }
    return j;
}

int code_of(const std::exception& e) {
    if (dynamic_cast<const SmallDivisorError*>(&e)) return small_divisor;
    if (dynamic_cast<const SmallnessError*>(&e) || dynamic_cast<const NotDiffeoError*>(&e)) return smallness;
    if (dynamic_cast<const qpverify::ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e))
        return io;
    if (dynamic_cast<const NoConvergence*>(&e) || dynamic_cast<const DivergedError*>(&e)) return tolerance;
    return module_error;
}

using Stage = void (*)(const RunConfig&, const fs::path&, Checks&, json&);

Stage stage_of(const std::string& name) {
    if (name == "straighten") return run_straighten;
    if (name == "chart") return run_chart;
    if (name == "kg") return run_kg;
    if (name == "psdo") return run_psdo;
    if (name == "dioph-scan") return run_scan;
    if (name == "evolve") return run_evolve;
    throw qpverify::ConfigError("unknown stage " + name);
}

// runs one stage into dir and writes report.json; returns the exit code
int run_stage(const std::string& name, const RunConfig& cfg, const fs::path& dir, json& summary) {
    json rep{{"command", name}, {"seed", cfg.seed}};
    Checks chk;
    int code = pass;
    try {
        fs::create_directories(dir);
        stage_of(name)(cfg, dir, chk, rep);
        code = chk.ok ? pass : tolerance;
    } catch (const std::exception& e) {
        code = code_of(e);
        rep["error"] = error_record(e, code);
        std::cerr << name << ": " << e.what() << '\n';
    }
    rep["checks"] = chk.rows;
    rep["passed"] = code == pass;
    rep["exit_code"] = code;
    summary = rep;
    try {
        write_json(dir / "report.json", rep);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return io;
    }
    return code;
}

std::vector<std::string> default_stages(const RunConfig& cfg) {
    if (!cfg.stages.empty()) return cfg.stages;
    std::vector<std::string> s;
    if (cfg.has("a0") || cfg.has("A")) s.push_back("straighten");
    if (cfg.has("A")) s.push_back("chart");
    const bool kg = cfg.has("Bxx") || cfg.has("Bx") || cfg.has("Bt") || cfg.has("B");
    if (kg) s.push_back("kg");
    if (kg || cfg.has("GR")) s.push_back("psdo");
    if (cfg.has_scan) s.push_back("dioph-scan");
    if (cfg.has_evolve && cfg.has("A")) s.push_back("evolve");
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"verification driver for quasi-periodic Klein-Gordon reductions"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    const std::vector<std::pair<const char*, const char*>> commands{
        {"straighten", "conjugate w.d_phi + (1 + a0) d_x to a constant field"},
        {"chart", "null coordinates and the conformally flat chart for A"},
        {"kg", "coefficient transformation and time-derivative removal"},
        {"psdo", "first order system and its reduction to order -1"},
        {"dioph-scan", "excluded measure of the diophantine set over a box"},
        {"evolve", "wave evolution, norm history and almost-periodic projection"},
        {"check", "every stage the config provides inputs for"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "overrides the config seed");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    const fs::path out(out_dir);
    RunConfig cfg;
    try {
        fs::create_directories(out);
        cfg = qpverify::load_config(config_path, seed);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        try {
            write_json(out / "error.json", error_record(e, io));
        } catch (...) {
        }
        return io;
    }

    if (cmd != "check") {
        json rep;
        return run_stage(cmd, cfg, out, rep);
    }

    json summary{{"command", "check"}, {"stages", json::object()}};
    int worst = pass;
    for (const auto& s : default_stages(cfg)) {
        json rep;
        const int code = run_stage(s, cfg, out / s, rep);
        summary["stages"][s] = {{"exit_code", code}, {"passed", code == pass}};
        if (code != pass && (worst == pass || worst == tolerance)) worst = code;
    }
    summary["exit_code"] = worst;
    try {
        write_json(out / "report.json", summary);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return io;
    }
    return worst;
}
