#include "qpred/kg_reduce.hpp"

#include <algorithm>
#include <cmath>

#include "qpred/errors.hpp"

namespace qpred {

namespace {

constexpr ParityClass even_even{Par::even, Par::even};
constexpr ParityClass even_odd{Par::even, Par::odd};
constexpr ParityClass odd_even{Par::odd, Par::even};

// grid node coordinates for flat index i, last axis fastest
void node_of(std::size_t i, int dims, int m, double* th) {
    for (int d = dims - 1; d >= 0; --d) {
        th[d] = GridValues::node(static_cast<int>(i % m), m);
        i /= m;
    }
}

TorusFunction dt(const TorusFunction& f, const std::vector<double>& omega) { return omega_derivative(f, omega); }
TorusFunction dx(const TorusFunction& f) { return derivative(f, f.nu()); }

std::vector<GridValues> synth_all(const std::vector<TorusFunction>& fs, int m) {
    std::vector<GridValues> g;
    g.reserve(fs.size());
    for (const auto& f : fs) g.push_back(synthesize(f, m));
    return g;
}

std::vector<GNormRow> norm_rows(const KGCoefficients& c, const FrequencyVector& w, double shift,
                                const std::function<double(double)>& lhs) {
    std::vector<GNormRow> rows;
    for (double s : {default_s0, default_s0 + 1, default_s0 + 2}) {
        GNormRow r;
        r.s = s;
        r.lhs = lhs(s);
        for (const TorusFunction* a : {&c.Bxx, &c.Bx, &c.Bt, &c.B})
            r.rhs = std::max(r.rhs, sobolev_norm(*a, s + shift) / w.gamma);
        r.ratio = r.rhs > 0 ? r.lhs / r.rhs : 0.0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

int KGCoefficients::cutoff() const {
    return std::max({Bxx.cutoff(), Bx.cutoff(), Bt.cutoff(), B.cutoff()});
}

TorusFunction combine(const std::vector<TorusFunction>& fs, int cutoff,
                      const std::function<double(const double*)>& fn) {
    int n = cutoff;
    for (const auto& f : fs) n = std::max(n, f.cutoff());
    const int m = 2 * default_grid(n);
    auto g = synth_all(fs, m);
    GridValues out{fs.front().nu(), m, std::vector<cplx>(g.front().size())};
    std::vector<double> vals(fs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = 0; k < fs.size(); ++k) vals[k] = g[k].v[i].real();
        out.v[i] = fn(vals.data());
    }
    return analyze(out, cutoff, true);
}

void check_parities(const KGCoefficients& c, double tol) {
    if (!c.declared_parity) return;
    auto need = [&](const TorusFunction& f, ParityClass p, const char* name) {
        const double v = parity_violation(f, p);
        if (v > tol) throw ParityError(std::string(name) + " violates its declared parity by " + std::to_string(v));
    };
    need(c.Bxx, even_even, "Bxx");
    need(c.B, even_even, "B");
    need(c.Bx, even_odd, "Bx");
    need(c.Bt, odd_even, "Bt");
}

GeometricSplit geometric_split(const KGCoefficients& c, const std::vector<double>& omega) {
    const int n = c.cutoff();
    const int m = 2 * default_grid(n);
    for (const auto& v : synthesize(c.Bxx, m).v)
        if (1 - v.real() <= 0) throw DegenerateMetricError("1 - Bxx is not positive on the grid");
    const double mass = c.mass;
    GeometricSplit s;
    s.A = combine({c.Bxx.resized(n)}, n, [](const double* v) { return std::sqrt(1 - v[0]); });
    const TorusFunction ax = dx(s.A), at = dt(s.A, omega);
    s.cx = combine({c.Bx, s.A, ax}, n, [](const double* v) { return (v[0] + v[1] * v[2]) / v[1]; });
    s.ct = combine({c.Bt, s.A, at}, n, [](const double* v) { return v[0] / v[1] + v[2] / (v[1] * v[1]); });
    s.c0 = combine({c.B, s.A}, n, [mass](const double* v) { return v[0] / v[1] - mass * (1 - 1 / v[1]); });
    return s;
}

ReducedKG transform_coefficients(const KGCoefficients& c, const NullChart& chart, const FrequencyVector& w) {
    if (chart.mode != ChartMode::parity) throw ShapeError("coefficient transform needs a parity chart");
    check_parities(c);
    const auto s = geometric_split(c, w.omega);
    const int n = std::max(c.cutoff(), chart.U.cutoff());
    const TorusFunction ts = chart.tau_shift(), rs = chart.r_shift();
    const TorusFunction& om = chart.conformal_orig;
    const double mass = c.mass;

    // orig variables: R_x = 1 + rs_x, R_t = w.d rs, tau_x = ts_x, tau_t = 1 + w.d ts
    TorusFunction gr = combine({om, s.cx, s.ct, dx(rs), dt(rs, w.omega)}, n, [](const double* v) {
        return v[0] * (v[1] * (1 + v[3]) + v[2] * v[4]);
    });
    TorusFunction gt = combine({om, s.cx, s.ct, dx(ts), dt(ts, w.omega)}, n, [](const double* v) {
        return v[0] * (v[1] * v[3] + v[2] * (1 + v[4]));
    });
    TorusFunction g0 = combine({om, s.c0}, n, [mass](const double* v) { return v[0] * v[1] - mass * (1 - v[0]); });

    ReducedKG r;
    r.stage = KGStage::geometric;
    r.alpha = chart.alpha;
    r.mass = mass;
    r.omega = w.omega;
    r.GR = compose_diffeo(gr, chart.psi_inv);
    r.Gtau = compose_diffeo(gt, chart.psi_inv);
    r.G = compose_diffeo(g0, chart.psi_inv);
    return r;
}

std::vector<GNormRow> estimate_g_norms(const ReducedKG& r, const KGCoefficients& c, const FrequencyVector& w,
                                       double shift) {
    if (shift < 0) shift = default_s0 + 2 * w.iota + 5;
    return norm_rows(c, w, shift, [&](double s) {
        return sobolev_norm(r.GR, s) + sobolev_norm(r.Gtau, s) + sobolev_norm(r.G, s);
    });
}

std::vector<GNormRow> estimate_gp_norms(const ReducedKG& r, const KGCoefficients& c, const FrequencyVector& w,
                                        double shift) {
    if (r.stage != KGStage::time_removed) throw ShapeError("time-removed stage expected");
    if (shift < 0) shift = default_s0 + 3 * w.iota + 7;
    return norm_rows(c, w, shift,
                     [&](double s) { return sobolev_norm(r.G2, s) + sobolev_norm(r.P + (-1.0), s); });
}

ReducedKG remove_time_derivative(const ReducedKG& r, const FrequencyVector& w) {
    if (r.stage != KGStage::geometric) throw ShapeError("time derivative already removed");
    const int nu = r.GR.nu();
    const int n = std::max({r.GR.cutoff(), r.Gtau.cutoff(), r.G.cutoff()});
    ReducedKG out = r;
    out.stage = KGStage::time_removed;
    if (r.Gtau.max_abs() == 0.0) {
        out.H = TorusFunction(nu, n);
        out.P = TorusFunction::constant(nu, n, 1.0);
        out.G2_R = TorusFunction(nu, n);
        out.G2 = TorusFunction(nu, n);
        out.Gtau = TorusFunction(nu, n);
        return out;
    }
    const double a2 = r.alpha * r.alpha;
    out.H = invert_phase_derivative(r.Gtau.resized(n), w);
    out.P = apply_pointwise(out.H, [a2](double h) { return std::exp(h / (2 * a2)); });
    const TorusFunction pr = dx(out.P);
    const TorusFunction ptt = dt(dt(out.P, w.omega), w.omega);
    const TorusFunction prr = dx(pr);
    out.G2_R = combine({out.P, pr}, n, [](const double* v) { return -2 * v[1] / v[0]; });
    out.G2 = combine({out.P, pr, ptt, prr, r.GR.resized(n)}, n, [a2](const double* v) {
        return -2 * v[1] * v[1] / v[0] + (-a2 * v[2] + v[3] - v[4] * v[1]);
    });
    out.GR = r.GR.resized(n) - out.G2_R;
    out.G = combine({r.G.resized(n), out.G2, out.P}, n, [](const double* v) { return v[0] + v[1] / v[2]; });
    out.Gtau = TorusFunction(nu, n);
    return out;
}

double operator_identity_residual(const ReducedKG& before, const ReducedKG& after, const TorusFunction& h) {
    const auto& om = after.omega;
    const double a2 = after.alpha * after.alpha, mass = after.mass;
    const int nw = after.P.cutoff() + h.cutoff();
    const TorusFunction wv = product(after.P, h, nw);
    const int m = 2 * default_grid(nw);
    auto g = synth_all({wv, dt(dt(wv, om), om), dx(wv), dx(dx(wv)), after.GR, after.P, h, dt(dt(h, om), om), dx(h),
                        dx(dx(h)), dt(h, om), before.GR, before.Gtau, after.G2},
                       m);
    double err = 0;
    for (std::size_t i = 0; i < g[0].size(); ++i) {
        auto v = [&](int k) { return g[k].v[i].real(); };
        const double lhs = -a2 * v(1) + v(3) - mass * v(0) - v(4) * v(2);
        const double l1 = -a2 * v(7) + v(9) - mass * v(6) - v(11) * v(8) - v(12) * v(10);
        err = std::max(err, std::abs(lhs - v(5) * l1 - v(13) * v(6)));
    }
    return err;
}

ReducedKG null_form_system(const TorusFunction& F, double alpha, double mass, const FrequencyVector& w) {
    ReducedKG r;
    r.alpha = alpha;
    r.mass = mass;
    r.omega = w.omega;
    r.Gtau = dt(F, w.omega);
    r.GR = (-1.0 / (alpha * alpha)) * dx(F);
    r.G = TorusFunction(F.nu(), F.cutoff());
    return r;
}

ManufacturedReport manufactured_check(const KGCoefficients& c, const NullChart& chart, const ReducedKG& r,
                                      const TorusFunction& phi) {
    const auto& om = r.omega;
    const int n = std::max({c.cutoff(), chart.U.cutoff(), phi.cutoff()});
    const int nu = phi.nu(), dims = nu + 1;
    const TorusFunction psi = compose_diffeo(phi.resized(n), chart.psi);
    const auto s = geometric_split(c, om);
    const int m = default_grid(n);
    auto g = synth_all({psi, dt(psi, om), dt(dt(psi, om), om), dx(psi), dx(dx(psi)), c.Bxx, c.Bx, c.Bt, c.B, s.A,
                        dt(s.A, om), dx(s.A), s.cx, s.ct, s.c0, chart.conformal_orig},
                       m);
    auto disp = synth_all(chart.psi.comp, m);
    const TorusFunction phit = dt(phi, om), phir = dx(phi);
    Evaluator e_phi(phi), e_t(phit), e_tt(dt(phit, om)), e_r(phir), e_rr(dx(phir));
    Evaluator e_gr(r.GR), e_gt(r.Gtau), e_g(r.G);
    const double a2 = r.alpha * r.alpha, mass = c.mass;
    ManufacturedReport rep;
    std::vector<double> th(dims);
    for (std::size_t i = 0; i < g[0].size(); ++i) {
        auto v = [&](int k) { return g[k].v[i].real(); };
        const double p = v(0), pt = v(1), ptt = v(2), px = v(3), pxx = v(4);
        const double bxx = v(5), bx = v(6), bt = v(7), b = v(8), a = v(9), at = v(10), ax = v(11);
        const double kg = ptt - pxx + mass * p + bxx * pxx + bx * px + bt * pt + b * p;
        const double box = (-ptt + a * a * pxx + (at / a) * pt + a * ax * px) / a - mass * p;
        const double lower = v(12) * px + v(13) * pt + v(14) * p;
        rep.geometric = std::max(rep.geometric, std::abs(box - lower + kg / a));
        rep.kg_scale = std::max(rep.kg_scale, std::abs(kg));

        node_of(i, dims, m, th.data());
        for (int d = 0; d < dims; ++d) th[d] += disp[d].v[i].real();
        const double f = e_phi.value(th.data()).real();
        const double enew = -a2 * e_tt.value(th.data()).real() + e_rr.value(th.data()).real() - mass * f -
                            e_gr.value(th.data()).real() * e_r.value(th.data()).real() -
                            e_gt.value(th.data()).real() * e_t.value(th.data()).real() - e_g.value(th.data()).real() * f;
        rep.two_sided = std::max(rep.two_sided, std::abs(enew + v(15) / a * kg));
    }
    return rep;
}

double KGParityReport::max() const { return std::max({G, GR, Gtau, P, G2}); }

KGParityReport kg_parity(const ReducedKG& r) {
    KGParityReport p;
    p.G = parity_violation(r.G, even_even);
    p.GR = parity_violation(r.GR, even_odd);
    p.Gtau = parity_violation(r.Gtau, odd_even);
    if (r.stage == KGStage::time_removed) {
        p.P = parity_violation(r.P, even_even);
        p.G2 = parity_violation(r.G2, even_even);
    }
    return p;
}

nlohmann::json to_json(const ReducedKG& r) {
    nlohmann::json j;
    j["stage"] = r.stage == KGStage::geometric ? "geometric" : "time_removed";
    j["alpha"] = r.alpha;
    j["mass"] = r.mass;
    j["omega"] = r.omega;
    j["GR"] = to_json(r.GR);
    j["Gtau"] = to_json(r.Gtau);
    j["G"] = to_json(r.G);
    if (r.stage == KGStage::time_removed) {
        j["P"] = to_json(r.P);
        j["H"] = to_json(r.H);
        j["G2_R"] = to_json(r.G2_R);
        j["G2"] = to_json(r.G2);
    }
    return j;
}

}  // namespace qpred
