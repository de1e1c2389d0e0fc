#include "config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "qpred/straighten.hpp"

namespace qpverify {

using nlohmann::json;
using qpred::TorusFunction;

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

qpred::Par parse_par(const std::string& s) {
    if (s == "even") return qpred::Par::even;
    if (s == "odd") return qpred::Par::odd;
    if (s == "none") return qpred::Par::none;
    throw ConfigError("parity must be even, odd or none, got " + s);
}

TorusFunction parse_source(const std::string& name, const json& src, const RunConfig& cfg,
                           const std::filesystem::path& base, std::uint64_t stream) {
    const int nu = cfg.nu, n = cfg.cutoff;
    if (src.is_number()) return TorusFunction::constant(nu, n, src.get<double>());
    if (!src.is_object()) throw ConfigError("coefficient '" + name + "' must be a number or an object");
    if (src.contains("constant")) return TorusFunction::constant(nu, n, src["constant"].get<double>());
    if (src.contains("file")) {
        const auto path = base / src["file"].get<std::string>();
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read coefficient file " + path.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("coefficient file " + path.string() + ": " + e.what());
        }
        auto f = qpred::torus_from_json(j);
        if (f.nu() != nu) throw ConfigError("coefficient file " + path.string() + " has the wrong nu");
        return f.resized(n);
    }
    if (src.contains("modes")) {
        TorusFunction f(nu, n);
        if (src.contains("mean")) f = TorusFunction::constant(nu, n, src["mean"].get<double>());
        for (const auto& row : src["modes"]) {
            if (!row.is_array() || row.size() < static_cast<std::size_t>(nu + 2))
                throw ConfigError("mode rows of '" + name + "' need nu + 1 indices and an amplitude");
            std::vector<int> l(nu);
            for (int d = 0; d < nu; ++d) l[d] = row[d].get<int>();
            const int j = row[nu].get<int>();
            for (int v : l)
                if (std::abs(v) > n) throw ConfigError("mode of '" + name + "' exceeds the cutoff");
            if (std::abs(j) > n) throw ConfigError("mode of '" + name + "' exceeds the cutoff");
            const double re = row[nu + 1].get<double>();
            const double im = row.size() > static_cast<std::size_t>(nu + 2) ? row[nu + 2].get<double>() : 0.0;
            f.set(l, j, f.coeff(l, j) + qpred::cplx(re, im));
        }
        return f;
    }
    if (src.contains("random")) {
        const json& r = src["random"];
        std::mt19937_64 rng(cfg.seed * 1000003ULL + stream);
        auto f = random_torus(nu, n, get_or(r, "band", 2), 1.0, get_or(r, "decay", 0.3), rng);
        if (r.contains("parity")) {
            const auto p = r["parity"].get<std::vector<std::string>>();
            if (p.size() != 2) throw ConfigError("parity of '" + name + "' needs a phase and a space entry");
            f = qpred::parity_project(f, {parse_par(p[0]), parse_par(p[1])});
        }
        if (get_or(r, "zero_mean", false)) f.data()[f.size() / 2] = 0.0;
        const double size = get_or(r, "size", 0.01);
        const double norm = qpred::sobolev_norm(f, get_or(r, "norm_s", qpred::default_s0));
        if (norm == 0) throw ConfigError("random coefficient '" + name + "' vanished after projection");
        f *= size / norm;
        if (r.contains("mean")) f = f + r["mean"].get<double>();
        return f;
    }
    throw ConfigError("coefficient '" + name + "' has no constant, file, modes or random entry");
}

std::vector<std::array<double, 3>> parse_line(const json& j, const char* key) {
    std::vector<std::array<double, 3>> rows;
    for (const auto& r : j.at(key)) {
        if (!r.is_array() || r.size() != 3) throw ConfigError(std::string(key) + " rows are (j, a, b)");
        rows.push_back({r[0].get<double>(), r[1].get<double>(), r[2].get<double>()});
    }
    return rows;
}

}  // namespace

TorusFunction random_torus(int nu, int cutoff, int band, double amp, double decay, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    TorusFunction f(nu, cutoff, false);
    std::vector<int> k(nu + 1);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        int w = 0;
        for (int v : k) w = std::max(w, std::abs(v));
        if (w > band) continue;
        const double re = nd(rng), im = nd(rng);
        f.data()[i] = amp * std::exp(-decay * w) * qpred::cplx(re, im);
    }
    f.enforce_real();
    return f;
}

qpred::FrequencyVector RunConfig::frequency() const { return qpred::FrequencyVector(omega, gamma, iota); }

TorusFunction RunConfig::coeff(const std::string& name) const {
    auto it = coefficients.find(name);
    return it == coefficients.end() ? TorusFunction(nu, cutoff) : it->second;
}

RunConfig parse_config(const json& j, const std::string& base_dir, std::optional<std::uint64_t> seed) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    c.nu = get_or(j, "nu", 1);
    c.cutoff = get_or(j, "cutoff", 16);
    c.gamma = get_or(j, "gamma", 0.01);
    c.iota = get_or(j, "iota", -1.0);
    c.mass = get_or(j, "mass", 1.0);
    c.alpha = get_or(j, "alpha", 1.0);
    c.seed = seed ? *seed : get_or<std::uint64_t>(j, "seed", 0);
    c.chart_bound = get_or(j, "chart_bound", qpred::chart_bound);
    c.smallness = get_or(j, "smallness", 0.1);
    c.eta2 = get_or(j, "eta2", qpred::default_eta2);
    c.samples = get_or(j, "samples", 5);
    c.write_operators = get_or(j, "write_operators", false);
    c.stages = get_or(j, "stages", std::vector<std::string>{});

    if (c.nu < 1) throw ConfigError("nu must be at least 1");
    if (c.cutoff < 1) throw ConfigError("cutoff must be at least 1");
    if (!(c.gamma > 0)) throw ConfigError("gamma must be positive");
    if (c.mass < 0) throw ConfigError("mass must be nonnegative");
    if (!(c.alpha > 0)) throw ConfigError("alpha must be positive");
    if (c.samples < 1) throw ConfigError("samples must be positive");

    if (!j.contains("omega")) {
        if (c.nu != 1) throw ConfigError("omega is required when nu > 1");
        c.omega = qpred::golden_frequency(c.gamma).omega;
    } else if (j["omega"].is_array()) {
        c.omega = j["omega"].get<std::vector<double>>();
    } else if (j["omega"].is_object() && j["omega"].contains("box")) {
        const auto lo = j["omega"]["box"].at(0).get<std::vector<double>>();
        const auto hi = j["omega"]["box"].at(1).get<std::vector<double>>();
        if (lo.size() != hi.size()) throw ConfigError("omega box corners differ in length");
        std::mt19937_64 rng(c.seed);
        for (std::size_t i = 0; i < lo.size(); ++i) c.omega.push_back(std::uniform_real_distribution<double>(lo[i], hi[i])(rng));
    } else {
        throw ConfigError("omega must be an array or {\"box\": [lo, hi]}");
    }
    if (static_cast<int>(c.omega.size()) != c.nu) throw ConfigError("omega must have nu entries");

    if (j.contains("layout")) {
        c.layout.L = get_or(j["layout"], "L", 4);
        c.layout.N = get_or(j["layout"], "N", 32);
    }
    c.layout.nu = c.nu;
    if (c.layout.L < 0 || c.layout.N < 1) throw ConfigError("layout needs L >= 0 and N >= 1");

    if (j.contains("tolerances")) {
        const json& t = j["tolerances"];
        Tolerances& o = c.tol;
        o.eikonal = get_or(t, "eikonal", o.eikonal);
        o.roundtrip = get_or(t, "roundtrip", o.roundtrip);
        o.metric = get_or(t, "metric", o.metric);
        o.parity = get_or(t, "parity", o.parity);
        o.residual = get_or(t, "residual", o.residual);
        o.manufactured = get_or(t, "manufactured", o.manufactured);
        o.identity = get_or(t, "identity", o.identity);
        o.order = get_or(t, "order", o.order);
        o.patterns = get_or(t, "patterns", o.patterns);
        o.inverse = get_or(t, "inverse", o.inverse);
        o.sup_ratio = get_or(t, "sup_ratio", o.sup_ratio);
        o.almost_periodic = get_or(t, "almost_periodic", o.almost_periodic);
        o.dispersion = get_or(t, "dispersion", o.dispersion);
        for (double v : {o.eikonal, o.roundtrip, o.metric, o.parity, o.residual, o.manufactured, o.identity,
                         o.patterns, o.inverse, o.sup_ratio, o.almost_periodic, o.dispersion})
            if (!(v > 0)) throw ConfigError("tolerances must be positive");
    }

    if (j.contains("coefficients")) {
        const std::filesystem::path base(base_dir);
        std::uint64_t stream = 0;
        for (const auto& [name, src] : j["coefficients"].items()) c.coefficients[name] = parse_source(name, src, c, base, ++stream);
    }

    if (j.contains("evolve")) {
        const json& e = j["evolve"];
        c.has_evolve = true;
        EvolveConfig& o = c.evolve;
        o.T = get_or(e, "T", o.T);
        o.dt = get_or(e, "dt", o.dt);
        o.record_dt = get_or(e, "record_dt", o.record_dt);
        o.s = get_or(e, "s", o.s);
        o.grid = get_or(e, "grid", o.grid);
        o.kmax = get_or(e, "kmax", o.kmax);
        if (e.contains("f")) o.f = parse_line(e, "f");
        if (e.contains("g")) o.g = parse_line(e, "g");
        if (!(o.T > 0) || !(o.dt > 0) || o.grid < 8 || o.kmax < 1) throw ConfigError("evolve needs T, dt > 0, grid >= 8, kmax >= 1");
    }

    if (j.contains("scan")) {
        const json& s = j["scan"];
        c.has_scan = true;
        ScanConfig& o = c.scan;
        o.lo = get_or(s, "lo", o.lo);
        o.hi = get_or(s, "hi", o.hi);
        o.gammas = get_or(s, "gammas", o.gammas);
        o.samples = get_or(s, "samples", o.samples);
        o.cutoff = get_or(s, "cutoff", o.cutoff);
        o.m = get_or(s, "m", o.m);
        if (o.lo.size() != o.hi.size() || o.lo.empty()) throw ConfigError("scan box corners must match");
        if (o.samples < 1 || o.cutoff < 1 || o.gammas.empty()) throw ConfigError("scan needs samples, cutoff and gammas");
    }

    static const std::vector<std::string> known{"straighten", "chart", "kg", "psdo", "dioph-scan", "evolve"};
    for (const auto& s : c.stages)
        if (std::find(known.begin(), known.end(), s) == known.end()) throw ConfigError("unknown stage " + s);
    return c;
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path().string(), seed);
}

}  // namespace qpverify
