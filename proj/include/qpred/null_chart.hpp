#pragma once

#include "json.hpp"
#include "qpred/straighten.hpp"
#include "qpred/torus.hpp"

namespace qpred {

enum class ChartMode { parity, no_parity };

// U solves w.d_phi U + A U_x = A - m_minus, V solves w.d_phi V - A V_x = A - m_plus
struct UVSolution {
    TorusFunction U, V;
    double m_minus = 1.0;
    double m_plus = 1.0;
    int iterations_u = 0;
    int iterations_v = 0;
};

// V comes from U by x-reflection when A is even in x, unless an independent solve is forced
UVSolution solve_UV(const TorusFunction& A, const FrequencyVector& w, const StraightenOptions& opt = {},
                    bool independent_v = false);

struct NullChart {
    ChartMode mode = ChartMode::parity;
    TorusFunction U, V;
    double rho_minus = 1.0;
    double rho_plus = 1.0;
    // 1/m in parity mode; equal to rho_minus = rho_plus there
    double alpha = 1.0;
    std::vector<double> omega;
    Displacement psi;
    Displacement psi_inv;
    // 1/(A(1 - U_x)(1 + V_x)) in the original variables
    TorusFunction conformal_orig;
    // the same composed with the inverse lift
    TorusFunction conformal_sq;

    // time shift (tau - t) and space shift (R - x) as torus functions of (phi, x)
    TorusFunction tau_shift() const;
    TorusFunction r_shift() const;
};

// sum of grid sups of U, V and their (t, x) derivatives
double chart_smallness(const TorusFunction& U, const TorusFunction& V, const std::vector<double>& omega);
constexpr double chart_bound = 0.125;

// min over the grid of det d(tau,R)/d(t,x)
double chart_jacobian_min(const NullChart& c, int m = 0);

// NotDiffeoError if chart_smallness >= bound or the chart Jacobian is not positive
NullChart build_chart(const TorusFunction& A, const UVSolution& uv, const FrequencyVector& w,
                      double bound = chart_bound);
NullChart build_chart_no_parity(const TorusFunction& A, const FrequencyVector& w,
                                const StraightenOptions& opt = {}, double bound = chart_bound);

// 1/(A(1 - U_x)(1 + V_x)); throws DegenerateMetricError on a sign violation
TorusFunction conformal_factor(const TorusFunction& A, const TorusFunction& U, const TorusFunction& V);

struct EikonalReport {
    double u_residual = 0;  // grid sup of u_t + A u_x
    double v_residual = 0;  // grid sup of v_t - A v_x
};
EikonalReport eikonal_residuals(const NullChart& c, const TorusFunction& A, int m = 0);

struct MetricReport {
    // sup of |g_tauR| and |g_tautau/g_RR + 1/(rho_+ rho_-)|
    double cross = 0;
    double ratio = 0;
    // sup deviation of each component from the metric derived for this chart
    double dev_tt = 0, dev_tr = 0, dev_rr = 0;
    // sup deviation of g_tauR from Omega^2 (rho_+ - rho_-)/(rho_+ rho_-)
    double dev_tr_stated = 0;
    bool passed = false;
};
MetricReport verify_metric_form(const NullChart& c, const TorusFunction& A, int m = 0, double tol = 1e-8);

struct ChartParityReport {
    double tau_shift = 0;     // odd in phi, even in x
    double r_shift = 0;       // even in phi, odd in x
    double conformal = 0;     // even, even
    double v_from_u_x = 0;    // V(phi,x) - U(phi,-x)
    double v_from_u_phi = 0;  // V(phi,x) + U(-phi,x)
};
ChartParityReport chart_parity(const NullChart& c);

nlohmann::json to_json(const NullChart& c);

}  // namespace qpred
