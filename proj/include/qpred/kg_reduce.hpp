#pragma once

#include <functional>
#include <vector>

#include "json.hpp"
#include "qpred/null_chart.hpp"

namespace qpred {

// d_t^2 psi - d_x^2 psi + mass psi + Bxx psi_xx + Bx psi_x + Bt psi_t + B psi = 0
struct KGCoefficients {
    TorusFunction Bxx, Bx, Bt, B;
    double mass = 0;
    // Bxx, B even/even, Bx even/odd, Bt odd/even
    bool declared_parity = true;

    int nu() const { return Bxx.nu(); }
    int cutoff() const;
};

// ParityError if declared classes are violated beyond tol
void check_parities(const KGCoefficients& c, double tol = 1e-12);

// A = sqrt(1 - Bxx) and the lower order coefficients of the geometric form
// (box_g - mass) psi = cx psi_x + ct psi_t + c0 psi
struct GeometricSplit {
    TorusFunction A, cx, ct, c0;
};
GeometricSplit geometric_split(const KGCoefficients& c, const std::vector<double>& omega);

enum class KGStage { geometric, time_removed };

// (-alpha^2 d_tau^2 + d_R^2 - mass) phi = GR phi_R + Gtau phi_tau + G phi
struct ReducedKG {
    KGStage stage = KGStage::geometric;
    double alpha = 1.0;
    double mass = 0;
    std::vector<double> omega;
    TorusFunction GR, Gtau, G;
    // present after time removal: P, its log-primitive H, the raw first order term -2 P_R/P and zeroth order term
    TorusFunction P, H, G2_R, G2;
};

ReducedKG transform_coefficients(const KGCoefficients& c, const NullChart& chart, const FrequencyVector& w);

struct GNormRow {
    double s = 0;
    double lhs = 0;  // sum of the three coefficient norms
    double rhs = 0;  // gamma^-1 max_a ||a||_{s + shift}
    double ratio = 0;
};
// shift defaults to s0 + 2 iota + 5
std::vector<GNormRow> estimate_g_norms(const ReducedKG& r, const KGCoefficients& c, const FrequencyVector& w,
                                       double shift = -1);
// time-removed stage: ||G2||_s + ||P - 1||_s against max_a ||a||_{s + s0 + 3 iota + 7}
std::vector<GNormRow> estimate_gp_norms(const ReducedKG& r, const KGCoefficients& c, const FrequencyVector& w,
                                        double shift = -1);

// w.d_phi H = Gtau, P = exp(H/(2 alpha^2)); new system has no d_tau term
ReducedKG remove_time_derivative(const ReducedKG& r, const FrequencyVector& w);

// sup over grid of |L2~(P h) - P L1 h - G2 h|, with L1 from the geometric stage and L2~ from the time-removed one
double operator_identity_residual(const ReducedKG& before, const ReducedKG& after, const TorusFunction& h);

// Gtau = d_tau F, GR = -alpha^-2 d_R F, G = 0
ReducedKG null_form_system(const TorusFunction& F, double alpha, double mass, const FrequencyVector& w);

struct ManufacturedReport {
    double geometric = 0;   // sup |(box_g - mass) psi - lower order + E/A|
    double two_sided = 0;   // sup |E_new o C + (Omega^2/A) E|
    double kg_scale = 0;    // sup |E|
};
// phi is a band-limited test function in the new variables, psi = phi o C
ManufacturedReport manufactured_check(const KGCoefficients& c, const NullChart& chart, const ReducedKG& r,
                                      const TorusFunction& phi);

struct KGParityReport {
    double G = 0, GR = 0, Gtau = 0;
    double P = 0, G2 = 0;
    double max() const;
};
KGParityReport kg_parity(const ReducedKG& r);

nlohmann::json to_json(const ReducedKG& r);

// pointwise combination of several functions on a padded grid, re-analyzed at cutoff
TorusFunction combine(const std::vector<TorusFunction>& fs, int cutoff,
                      const std::function<double(const double*)>& fn);

}  // namespace qpred
