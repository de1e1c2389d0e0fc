#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qpred/diophantine.hpp"
#include "qpred/fitting.hpp"
#include "qpred/kg_reduce.hpp"
#include "qpred/null_chart.hpp"
#include "qpred/psdo_reduce.hpp"
#include "qpred/straighten.hpp"
#include "qpred/wave.hpp"
#include "support.hpp"

using namespace qpred;
using testsupport::random_function;

namespace {

int failures = 0;

struct Line {
    std::string id;
    bool ok = true;
    std::string detail;

    void le(const char* name, double v, double tol) {
        ok = ok && !std::isnan(v) && v <= tol;
        char buf[128];
        std::snprintf(buf, sizeof buf, " %s=%.3g(<=%.3g)", name, v, tol);
        detail += buf;
    }
    void flag(const char* name, bool v) {
        ok = ok && v;
        detail += std::string(" ") + name + "=" + (v ? "yes" : "no");
    }
    void note(const char* name, double v) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " %s=%.4g", name, v);
        detail += buf;
    }
};

void report(Line& l) {
    if (!l.ok) ++failures;
    std::printf("%s %s%s\n", l.id.c_str(), l.ok ? "PASS" : "FAIL", l.detail.c_str());
    std::fflush(stdout);
}

void run(const char* id, const std::function<void(Line&)>& body) {
    Line l{id, true, ""};
    try {
        body(l);
    } catch (const std::exception& e) {
        l.ok = false;
        l.detail += std::string(" error: ") + e.what();
    }
    report(l);
}

StraightenOptions relaxed() {
    StraightenOptions o;
    o.smallness = 1e300;
    return o;
}

constexpr double loose_bound = 1.0;

// 1 + eps cos phi cos x
TorusFunction product_coefficient(int n, double eps) {
    TorusFunction a = TorusFunction::constant(1, n, 1.0);
    a(1, 1) = a(-1, -1) = a(1, -1) = a(-1, 1) = eps / 4;
    return a;
}

// 1 + d cos(phi + x) + (d/2) sin x
TorusFunction no_parity_coefficient(double d, int n) {
    TorusFunction a = TorusFunction::constant(1, n, 1.0);
    a(1, 1) = a(-1, -1) = d / 2;
    a(0, 1) = cplx(0, -d / 4);
    a(0, -1) = cplx(0, d / 4);
    return a;
}

TorusFunction with_parity(TorusFunction f, ParityClass p, double size, double s) {
    f = parity_project(f, p);
    f *= size / sobolev_norm(f, s);
    return f;
}

KGCoefficients kg_data(std::mt19937_64& rng, double size, double mass, int n = 24) {
    const double s1 = default_s0 + 2 * 4.0 + 4;
    KGCoefficients c;
    c.Bxx = with_parity(random_function(1, n, 2, 1.0, 0.3, rng), {Par::even, Par::even}, size, s1);
    c.Bx = with_parity(random_function(1, n, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, size, s1);
    c.Bt = with_parity(random_function(1, n, 2, 1.0, 0.3, rng), {Par::odd, Par::even}, size, s1);
    c.B = with_parity(random_function(1, n, 2, 1.0, 0.3, rng), {Par::even, Par::even}, size, s1);
    c.mass = mass;
    return c;
}

NullChart chart_for(const KGCoefficients& c, const FrequencyVector& w) {
    const auto s = geometric_split(c, w.omega);
    return build_chart(s.A, solve_UV(s.A, w, relaxed()), w, loose_bound);
}

void ac1(Line& l) {
    auto w = golden_frequency();
    auto a = product_coefficient(32, 0.05);
    auto c = build_chart(a, solve_UV(a, w, relaxed()), w, loose_bound);
    auto e = eikonal_residuals(c, a);
    l.le("u_eikonal", e.u_residual, 1e-9);
    l.le("v_eikonal", e.v_residual, 1e-9);
    l.le("roundtrip", roundtrip_error(c.psi, c.psi_inv), 1e-9);
    l.le("roundtrip_inv", roundtrip_error(c.psi_inv, c.psi), 1e-9);
}

void ac2(Line& l) {
    auto w = golden_frequency();
    auto a = product_coefficient(32, 0.05);
    auto c = build_chart(a, solve_UV(a, w, relaxed()), w, loose_bound);
    auto m = verify_metric_form(c, a);
    l.le("g_tauR", m.cross, 1e-8);
    l.le("ratio_plus_alpha^-2", m.ratio, 1e-8);
}

void ac3(Line& l) {
    auto w = golden_frequency();
    std::mt19937_64 rng(101);
    const double s1 = default_s0 + 2 * w.iota + 4;
    double db = 0, dm = 0;
    for (int t = 0; t < 10; ++t) {
        auto a0 = random_function(1, 24, 3, 1.0, 0.3, rng);
        a0 *= 0.05 * w.gamma / sobolev_norm(a0, s1);
        auto n = straighten_newton(a0, w);
        auto c = straighten_collocation(a0, w);
        if (!n.converged) l.flag("newton_converged", false);
        auto diff = n.beta - c.beta;
        diff.data()[diff.size() / 2] = 0.0;
        db = std::max(db, sobolev_norm(diff, default_s0));
        dm = std::max(dm, std::abs(n.m_inf - c.m_inf));
    }
    l.le("beta_diff", db, 1e-8);
    l.le("m_diff", dm, 1e-9);

    const double eps = 0.1;
    TorusFunction a0(1, 32);
    a0(0, 1) = a0(0, -1) = eps / 2;
    const int q = 4096;
    double mean = 0;
    for (int k = 0; k < q; ++k) mean += 1.0 / (1.0 + eps * std::cos(2 * std::acos(-1.0) * k / q));
    const double mq = q / mean;
    auto r = straighten_newton(a0, w, relaxed());
    l.le("m_vs_quadrature", std::abs(r.m_inf - mq), 1e-9);
    l.le("m_vs_sqrt", std::abs(r.m_inf - std::sqrt(1 - eps * eps)), 1e-9);
}

void ac4(Line& l) {
    auto w = golden_frequency();
    double worst = 0;

    auto a = product_coefficient(32, 0.05);
    auto p = chart_parity(build_chart(a, solve_UV(a, w, relaxed()), w, loose_bound));
    const double chart_max = std::max({p.tau_shift, p.r_shift, p.conformal, p.v_from_u_x, p.v_from_u_phi});
    l.note("chart", chart_max);
    worst = std::max(worst, chart_max);

    std::mt19937_64 rng(23);
    auto a0 = parity_project(random_function(1, 24, 3, 0.002, 0.3, rng), {Par::even, Par::even});
    auto beta = straighten_newton(a0, w, relaxed()).beta;
    const double joint = (reflect(beta, true, true) + beta).max_abs();
    l.note("beta_joint", joint);
    worst = std::max(worst, joint);

    auto c = kg_data(rng, 0.02, 1.0);
    check_parities(c, 1e-9);
    auto r = transform_coefficients(c, chart_for(c, w), w);
    auto o = remove_time_derivative(r, w);
    const double kg1 = kg_parity(r).max(), kg2 = kg_parity(o).max();
    l.note("reduced", kg1);
    l.note("time_removed", kg2);
    worst = std::max({worst, kg1, kg2});
    l.le("worst", worst, 1e-9);
}

void ac5(Line& l) {
    auto w = golden_frequency();
    std::mt19937_64 rng(11);
    auto c = kg_data(rng, 0.02, 1.0);
    bool nonzero = true;
    for (const TorusFunction* f : {&c.Bxx, &c.Bx, &c.Bt, &c.B}) nonzero = nonzero && f->max_abs() > 0;
    l.flag("all_B_nonzero", nonzero);
    auto chart = chart_for(c, w);
    auto r = transform_coefficients(c, chart, w);
    double worst = 0, scale = 1e300;
    for (int t = 0; t < 5; ++t) {
        auto rep = manufactured_check(c, chart, r, random_function(1, 3, 3, 1.0, 0.2, rng));
        worst = std::max(worst, rep.two_sided);
        scale = std::min(scale, rep.kg_scale);
    }
    l.note("min_kg_scale", scale);
    l.le("two_sided", worst, 1e-8);
}

void ac6(Line& l) {
    auto w = golden_frequency();
    std::mt19937_64 rng(13);
    auto c = kg_data(rng, 0.02, 1.0);
    auto r = transform_coefficients(c, chart_for(c, w), w);
    auto o = remove_time_derivative(r, w);
    l.flag("Gtau_zero", o.Gtau.max_abs() == 0.0);
    double worst = 0;
    for (int t = 0; t < 5; ++t)
        worst = std::max(worst, operator_identity_residual(r, o, random_function(1, 4, 4, 1.0, 0.2, rng)));
    l.le("identity", worst, 1e-9);

    TorusFunction F(1, 16);
    const double eps = 0.01;
    F(1, 0) = F(-1, 0) = eps / 2;
    F(1, 1) = F(-1, -1) = F(1, -1) = F(-1, 1) = eps / 4;
    auto nf = remove_time_derivative(null_form_system(F, 1.05, 1.0, w), w);
    l.le("null_form_GR", nf.GR.max_abs(), 1e-8);
    l.flag("null_form_Gtau_zero", nf.Gtau.max_abs() == 0.0);
}

void ac7(Line& l) {
    auto w = golden_frequency();
    std::mt19937_64 rng(12);
    ReducedKG r;
    r.stage = KGStage::time_removed;
    r.alpha = 1.03;
    r.mass = 1.0;
    r.omega = w.omega;
    r.GR = with_parity(random_function(1, 4, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.02, default_s0);
    r.G = with_parity(random_function(1, 4, 2, 1.0, 0.3, rng), {Par::even, Par::even}, 0.02, default_s0);
    r.Gtau = TorusFunction(1, 4);
    l.note("GR_s0", sobolev_norm(r.GR, default_s0));
    auto p = psdo_pipeline(r, w, OpLayout{});
    l.note("order_before", p.transform.order_original.fitted_order);
    l.le("order", p.transform.order.fitted_order, -0.7);
    l.le("patterns", p.transform.patterns.max(), 1e-12);
    l.le("TTinv", p.transform.inverse_residual, 1e-10);
}

void ac8(Line& l) {
    auto one = [](const std::vector<double>&) { return 1.0; };
    auto rows = measure_complement({1.0}, {2.0}, one, {0.2, 0.1, 0.05, 0.01}, 10000, 64);
    bool strict = rows.size() == 4;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) strict = strict && rows[i].fraction_excluded > rows[i + 1].fraction_excluded;
    for (const auto& r : rows) l.note(("g" + std::to_string(r.gamma).substr(0, 4)).c_str(), r.fraction_excluded);
    l.flag("strictly_decreasing", strict);
}

void ac9(Line& l) {
    auto w = golden_frequency();
    const auto A = no_parity_coefficient(0.05, 16);
    auto chart = build_chart_no_parity(A, w, relaxed(), loose_bound);
    WaveOptions opt;
    opt.T = 1000;
    opt.dt = 0.005;
    opt.grid = 128;
    auto f = sample_line(opt.grid, [](double x) { return std::cos(x) + 0.2 * std::sin(2 * x); });
    auto st = evolve_wave(A, w.omega, f, std::vector<double>(opt.grid, 0.0), opt);
    l.le("sup_ratio", st.sup_ratio(), 10.0);
    l.le("almost_periodic", almost_periodic_check(st, chart, 8).residual_fraction, 1e-4);
    double disp = 0;
    for (int k = 1; k <= 64; ++k) {
        const auto [a, b] = dispersion_roots(chart.rho_plus, chart.rho_minus, k);
        const double scale = double(k) * k;
        disp = std::max({disp, std::abs(dispersion_residual(chart.rho_plus, chart.rho_minus, k, a)) / scale,
                         std::abs(dispersion_residual(chart.rho_plus, chart.rho_minus, k, b)) / scale});
    }
    l.le("dispersion", disp, 1e-12);
}

// constant fitted on alternating halves; ratios along the family stay within 20%
void scaling_check(Line& l, const std::string& name, const std::vector<double>& lhs, const std::vector<double>& rhs) {
    std::vector<double> ratio;
    for (std::size_t i = 0; i < lhs.size(); ++i) ratio.push_back(lhs[i] / rhs[i]);
    l.flag((name + "_holds").c_str(), fit_constant(lhs, rhs).holds);
    l.le((name + "_spread").c_str(), relative_spread(ratio), 0.2);
}

// eps_k = (k + 1) eps_max / 10, with eps_max at the default straightening smallness threshold
void ac10(Line& l) {
    auto w = golden_frequency();
    const StraightenOptions admissible;
    const double s = default_s0, mu = default_s0 + 2 * w.iota + 4;
    std::mt19937_64 rng(41);
    auto shape = parity_project(random_function(1, 24, 2, 1.0, 0.3, rng), {Par::even, Par::even});
    shape.data()[shape.size() / 2] = 0.0;
    const double eps_max = admissible.smallness * w.gamma / sobolev_norm(shape, admissible.s1);
    auto h = random_function(1, 24, 3, 1.0, 0.3, rng);
    auto base = kg_data(rng, 1.0, 0.0);

    std::vector<double> uv_l, uv_r, tame_l, tame_r, inc_l, inc_r, conf_l, conf_r, g_l, g_r, gp_l, gp_r;
    for (int k = 0; k < 10; ++k) {
        const double eps = eps_max * (k + 1) / 10;
        auto a = 1.0 + eps * shape;
        auto am1 = a + (-1.0);
        auto uv = solve_UV(a, w, admissible);
        auto chart = build_chart(a, uv, w);
        uv_l.push_back(sobolev_norm(uv.U, s) + sobolev_norm(uv.V, s));
        uv_r.push_back(sobolev_norm(am1, s + 2 * w.iota + 4) / w.gamma);
        auto moved = compose_diffeo(h, chart.psi_inv);
        const double scaling_term = sobolev_norm(am1, s + mu) * sobolev_norm(h, 1) / w.gamma;
        tame_l.push_back(sobolev_norm(moved, s));
        tame_r.push_back(sobolev_norm(h, s) + scaling_term);
        inc_l.push_back(sobolev_norm(moved - h, s));
        inc_r.push_back(scaling_term);
        conf_l.push_back(sobolev_norm(chart.conformal_sq + (-1.0), s));
        conf_r.push_back(sobolev_norm(am1, s + mu));

        KGCoefficients c = base;
        const double kg_eps = 0.002 * (k + 1) / 10;
        for (TorusFunction* f : {&c.Bxx, &c.Bx, &c.Bt, &c.B}) *f *= kg_eps;
        auto r = transform_coefficients(c, chart_for(c, w), w);
        auto gr = estimate_g_norms(r, c, w).front();
        g_l.push_back(gr.lhs);
        g_r.push_back(gr.rhs);
        auto gp = estimate_gp_norms(remove_time_derivative(r, w), c, w).front();
        gp_l.push_back(gp.lhs);
        gp_r.push_back(gp.rhs);
    }
    l.note("eps_max", eps_max);
    scaling_check(l, "UV", uv_l, uv_r);
    l.flag("tame_holds", fit_constant(tame_l, tame_r).holds);
    // the eps-independent part has constant 1; the scaling part carries the fitted constant
    scaling_check(l, "tame_increment", inc_l, inc_r);
    scaling_check(l, "conformal", conf_l, conf_r);
    scaling_check(l, "G", g_l, g_r);
    scaling_check(l, "GP", gp_l, gp_r);
}

}  // namespace

int main() {
    run("AC-1", ac1);
    run("AC-2", ac2);
    run("AC-3", ac3);
    run("AC-4", ac4);
    run("AC-5", ac5);
    run("AC-6", ac6);
    run("AC-7", ac7);
    run("AC-8", ac8);
    run("AC-9", ac9);
    run("AC-10", ac10);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
