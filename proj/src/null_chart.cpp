#include "qpred/null_chart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpred/errors.hpp"

namespace qpred {

namespace {

bool even_in_x(const TorusFunction& f) { return parity_violation(f, {Par::none, Par::even}) <= 1e-14; }
bool even_even(const TorusFunction& f) { return parity_violation(f, {Par::even, Par::even}) <= 1e-14; }

double grid_sup(const TorusFunction& f, int m) { return synthesize(f, m).sup(); }

GridValues grid(const TorusFunction& f, int m) { return synthesize(f, m); }

}  // namespace

TorusFunction NullChart::tau_shift() const {
    const double k = rho_plus * rho_minus / (rho_plus + rho_minus);
    return k * (U + V);
}

TorusFunction NullChart::r_shift() const {
    const double kappa = rho_plus + rho_minus;
    return (rho_plus / kappa) * V - (rho_minus / kappa) * U;
}

UVSolution solve_UV(const TorusFunction& A, const FrequencyVector& w, const StraightenOptions& opt,
                    bool independent_v) {
    const int m = 2 * default_grid(A.cutoff());
    for (const auto& v : synthesize(A, m).v)
        if (v.real() <= 0) throw DegenerateMetricError("A is not positive on the grid");
    UVSolution out;
    auto ru = straighten_newton(A + (-1.0), w, opt);
    out.U = -ru.beta;
    out.m_minus = ru.m_inf;
    out.iterations_u = ru.iterations;
    if (even_in_x(A) && !independent_v) {
        out.V = reflect(out.U, false, true);
        out.m_plus = out.m_minus;
        return out;
    }
    // V(phi,x) = W(phi,-x) where W solves the U equation for A(phi,-x)
    auto rv = straighten_newton(reflect(A, false, true) + (-1.0), w, opt);
    out.V = reflect(-rv.beta, false, true);
    out.m_plus = rv.m_inf;
    out.iterations_v = rv.iterations;
    return out;
}

double chart_smallness(const TorusFunction& U, const TorusFunction& V, const std::vector<double>& omega) {
    const int m = 2 * default_grid(std::max(U.cutoff(), V.cutoff()));
    double s = 0;
    for (const TorusFunction* f : {&U, &V}) {
        s += grid_sup(*f, m);
        s += std::max(grid_sup(omega_derivative(*f, omega), m), grid_sup(derivative(*f, f->nu()), m));
    }
    return s;
}

TorusFunction conformal_factor(const TorusFunction& A, const TorusFunction& U, const TorusFunction& V) {
    const int n = std::max({A.cutoff(), U.cutoff(), V.cutoff()});
    const int m = 2 * default_grid(n);
    GridValues ga = grid(A.resized(n), m);
    GridValues ux = grid(derivative(U, U.nu()).resized(n), m);
    GridValues vx = grid(derivative(V, V.nu()).resized(n), m);
    GridValues out{A.nu(), m, std::vector<cplx>(ga.size())};
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const double a = ga.v[i].real(), pu = 1 - ux.v[i].real(), pv = 1 + vx.v[i].real();
        if (a <= 0 || pu <= 0 || pv <= 0)
            throw DegenerateMetricError("null coordinate derivatives have the wrong sign");
        out.v[i] = 1.0 / (a * pu * pv);
    }
    return analyze(out, n, true);
}

double chart_jacobian_min(const NullChart& c, int m) {
    const TorusFunction ts = c.tau_shift(), rs = c.r_shift();
    if (m == 0) m = 2 * default_grid(std::max(ts.cutoff(), rs.cutoff()));
    const int nu = ts.nu();
    GridValues tt = grid(omega_derivative(ts, c.omega), m), tx = grid(derivative(ts, nu), m);
    GridValues rt = grid(omega_derivative(rs, c.omega), m), rx = grid(derivative(rs, nu), m);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tt.size(); ++i)
        lo = std::min(lo, (1 + tt.v[i].real()) * (1 + rx.v[i].real()) - tx.v[i].real() * rt.v[i].real());
    return lo;
}

NullChart build_chart(const TorusFunction& A, const UVSolution& uv, const FrequencyVector& w, double bound) {
    const double small = chart_smallness(uv.U, uv.V, w.omega);
    if (small >= bound)
        throw NotDiffeoError("U, V and first derivatives sum to " + std::to_string(small) + ", bound " +
                             std::to_string(bound));
    NullChart c;
    c.U = uv.U;
    c.V = uv.V;
    c.rho_minus = 1.0 / uv.m_minus;
    c.rho_plus = 1.0 / uv.m_plus;
    c.mode = (uv.m_minus == uv.m_plus && even_even(A)) ? ChartMode::parity : ChartMode::no_parity;
    c.alpha = c.mode == ChartMode::parity ? c.rho_minus : std::sqrt(c.rho_minus * c.rho_plus);
    c.omega = w.omega;
    if (chart_jacobian_min(c) <= 0) throw NotDiffeoError("chart Jacobian is not positive");
    const int nu = A.nu();
    const TorusFunction ts = c.tau_shift(), rs = c.r_shift();
    c.psi.comp.clear();
    for (int i = 0; i < nu; ++i) c.psi.comp.push_back(w.omega[i] * ts);
    c.psi.comp.push_back(rs);
    c.psi_inv = invert_diffeo(c.psi);
    c.conformal_orig = conformal_factor(A, c.U, c.V);
    c.conformal_sq = compose_diffeo(c.conformal_orig, c.psi_inv);
    return c;
}

NullChart build_chart_no_parity(const TorusFunction& A, const FrequencyVector& w, const StraightenOptions& opt,
                                double bound) {
    return build_chart(A, solve_UV(A, w, opt, true), w, bound);
}

EikonalReport eikonal_residuals(const NullChart& c, const TorusFunction& A, int m) {
    const int n = std::max({A.cutoff(), c.U.cutoff(), c.V.cutoff()});
    if (m == 0) m = 2 * default_grid(n);
    GridValues ga = grid(A, m);
    GridValues ut = grid(omega_derivative(c.U, c.omega), m), ux = grid(derivative(c.U, A.nu()), m);
    GridValues vt = grid(omega_derivative(c.V, c.omega), m), vx = grid(derivative(c.V, A.nu()), m);
    EikonalReport r;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const double a = ga.v[i].real();
        // u = U + t/rho_- - x, v = V + t/rho_+ + x
        const double eu = ut.v[i].real() + 1.0 / c.rho_minus + a * (ux.v[i].real() - 1.0);
        const double ev = vt.v[i].real() + 1.0 / c.rho_plus - a * (vx.v[i].real() + 1.0);
        r.u_residual = std::max(r.u_residual, std::abs(eu));
        r.v_residual = std::max(r.v_residual, std::abs(ev));
    }
    return r;
}

MetricReport verify_metric_form(const NullChart& c, const TorusFunction& A, int m, double tol) {
    const int n = std::max({A.cutoff(), c.U.cutoff(), c.V.cutoff()});
    if (m == 0) m = 2 * default_grid(n);
    const int nu = A.nu();
    const TorusFunction ts = c.tau_shift(), rs = c.r_shift();
    GridValues ga = grid(A, m);
    GridValues tt = grid(omega_derivative(ts, c.omega), m), tx = grid(derivative(ts, nu), m);
    GridValues rt = grid(omega_derivative(rs, c.omega), m), rx = grid(derivative(rs, nu), m);
    GridValues ux = grid(derivative(c.U, nu), m), vx = grid(derivative(c.V, nu), m);
    const double rp = c.rho_plus, rm = c.rho_minus;
    MetricReport rep;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const double a = ga.v[i].real();
        // Jacobian of (t,x) -> (tau,R)
        const double j11 = 1 + tt.v[i].real(), j12 = tx.v[i].real();
        const double j21 = rt.v[i].real(), j22 = 1 + rx.v[i].real();
        const double det = j11 * j22 - j12 * j21;
        if (det == 0) throw DegenerateMetricError("chart Jacobian is singular");
        // K = J^{-1}
        const double k11 = j22 / det, k12 = -j12 / det, k21 = -j21 / det, k22 = j11 / det;
        // g_new = K^T diag(-A, 1/A) K
        const double gtt = -a * k11 * k11 + k21 * k21 / a;
        const double gtr = -a * k11 * k12 + k21 * k22 / a;
        const double grr = -a * k12 * k12 + k22 * k22 / a;
        const double om2 = 1.0 / (a * (1 - ux.v[i].real()) * (1 + vx.v[i].real()));
        rep.cross = std::max(rep.cross, std::abs(gtr));
        rep.ratio = std::max(rep.ratio, std::abs(gtt / grr + 1.0 / (rp * rm)));
        rep.dev_tt = std::max(rep.dev_tt, std::abs(gtt + om2 / (rp * rm)));
        rep.dev_rr = std::max(rep.dev_rr, std::abs(grr - om2));
        rep.dev_tr = std::max(rep.dev_tr, std::abs(gtr + om2 * (rp - rm) / (2 * rp * rm)));
        rep.dev_tr_stated = std::max(rep.dev_tr_stated, std::abs(gtr - om2 * (rp - rm) / (rp * rm)));
    }
    if (c.mode == ChartMode::parity)
        rep.passed = rep.cross <= tol && rep.ratio <= tol;
    else
        rep.passed = rep.dev_tt <= tol && rep.dev_tr <= tol && rep.dev_rr <= tol;
    return rep;
}

ChartParityReport chart_parity(const NullChart& c) {
    ChartParityReport r;
    r.tau_shift = parity_violation(c.tau_shift(), {Par::odd, Par::even});
    r.r_shift = parity_violation(c.r_shift(), {Par::even, Par::odd});
    r.conformal = parity_violation(c.conformal_orig, {Par::even, Par::even});
    r.v_from_u_x = (c.V - reflect(c.U, false, true)).max_abs();
    r.v_from_u_phi = (c.V + reflect(c.U, true, false)).max_abs();
    return r;
}

nlohmann::json to_json(const NullChart& c) {
    nlohmann::json j;
    j["mode"] = c.mode == ChartMode::parity ? "parity" : "no_parity";
    j["U"] = to_json(c.U);
    j["V"] = to_json(c.V);
    if (c.mode == ChartMode::parity) {
        j["alpha"] = c.alpha;
    } else {
        j["rho_plus"] = c.rho_plus;
        j["rho_minus"] = c.rho_minus;
    }
    j["m_inf"] = 1.0 / c.rho_minus;
    j["omega"] = c.omega;
    auto disp = [](const Displacement& p) {
        auto a = nlohmann::json::array();
        for (const auto& f : p.comp) a.push_back(to_json(f));
        return a;
    };
    j["psi"] = disp(c.psi);
    j["psi_inverse"] = disp(c.psi_inv);
    j["conformal_sq"] = to_json(c.conformal_sq);
    return j;
}

}  // namespace qpred
