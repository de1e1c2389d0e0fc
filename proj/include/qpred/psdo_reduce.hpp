#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpred/kg_reduce.hpp"

namespace qpred {

// truncation of the extended phase space: phase modes |l_i| <= L, spatial modes |j| <= N
struct OpLayout {
    int nu = 1;
    int L = 4;
    int N = 32;

    int side_l() const { return 2 * L + 1; }
    int side_j() const { return 2 * N + 1; }
    std::size_t size() const;
    // -1 when out of range
    long index(const int* k) const;
    void mode(std::size_t i, int* k) const;
};

// operator on functions of (phi, x) in Fourier modes; blocks = 2 for systems acting on (u, u-bar)
struct OperatorMatrix {
    OpLayout layout;
    int blocks = 1;
    Eigen::MatrixXcd m;

    std::size_t n() const { return layout.size(); }
    Eigen::MatrixXcd block(int r, int c) const;
    static OperatorMatrix identity(const OpLayout& lay, int blocks = 1);
    static OperatorMatrix zero(const OpLayout& lay, int blocks = 1);
};

OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b);
OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b);
OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b);
OperatorMatrix operator*(cplx s, const OperatorMatrix& a);
OperatorMatrix block2(const OperatorMatrix& a11, const OperatorMatrix& a12, const OperatorMatrix& a21,
                      const OperatorMatrix& a22);

OperatorMatrix multiplication_op(const TorusFunction& f, const OpLayout& lay);
OperatorMatrix fourier_multiplier(const OpLayout& lay, const std::function<cplx(int)>& fn);
// i w.l on the phase modes
OperatorMatrix phase_derivative_op(const OpLayout& lay, const std::vector<double>& omega);

// sqrt(j^2 + mass), or its inverse; ZeroModeError for the inverse at mass 0
OperatorMatrix build_Dm(double mass, const OpLayout& lay, bool inverse = false);

// symbol a(phi, x, xi) sampled at integer xi in [-xi_max, xi_max]; each slice is a function of (phi, x)
struct SymbolGrid {
    int xi_max = 0;
    std::vector<TorusFunction> slices;
    std::vector<int> flagged;

    const TorusFunction& at(int xi) const { return slices.at(xi + xi_max); }
    TorusFunction& at(int xi) { return slices.at(xi + xi_max); }
    // a(phi, x, -xi)
    SymbolGrid mirrored() const;
    double sup() const;
};

// (Op(a) u)(x) = sum_j a(x, j) u_j e^{ijx}
OperatorMatrix quantize(const SymbolGrid& a, const OpLayout& lay);

struct OrderEstimate {
    double fitted_order = 0;
    double fit_residual = 0;
    int xi_lo = 0, xi_hi = 0;
};
nlohmann::json to_json(const OrderEstimate& e);

// slope of log max|column entries| against log <xi> over input frequencies xi_lo..xi_hi, columns with |l| <= lmax;
// column maxima at or below floor count as zero
OrderEstimate fit_operator_order(const OperatorMatrix& a, int xi_lo = 6, int xi_hi = 24, int lmax = 1,
                                 double floor = 0.0);
OrderEstimate fit_symbol_order(const SymbolGrid& a, int xi_lo = 6, int xi_hi = 24);

// d_tau U = (D1 + D0 + Dm1) U for U = (u, u-bar), u = (D phi - i alpha phi_tau)/sqrt 2
struct FirstOrderSystem {
    double alpha = 1, mass = 1;
    OperatorMatrix D1, D0, Dm1;
    OperatorMatrix generator() const { return D1 + D0 + Dm1; }
};
FirstOrderSystem to_first_order(const ReducedKG& r, const OpLayout& lay);

struct VeeTransform {
    OperatorMatrix V, V_inv;
    int neumann_terms = 0;
    double inverse_residual = 0;
};
constexpr double default_eta2 = 0.05;
// V = Id + (1/4) G^R d_x D^-2 [[1,1],[1,1]]; SmallnessError if ||G^R||_{s0} > eta2 or the Neumann series stalls
VeeTransform vee_transform(const TorusFunction& GR, double mass, double alpha, const OpLayout& lay,
                           double eta2 = default_eta2);

// (c(xi)/2) G^R with c(xi) = xi/sqrt(xi^2 + mass)
SymbolGrid h_symbol(const TorusFunction& GR, double mass, int xi_max);

struct SymbolSolve {
    SymbolGrid d;
    // h minus the transport operator applied to d
    SymbolGrid residual;
    double residual_sup = 0;
    OrderEstimate residual_order;
};
// -alpha w.d_phi d + c(xi) d_x d = h slice by slice
SymbolSolve solve_symbol_d(const SymbolGrid& h, const FrequencyVector& w, double alpha, double mass);

struct Conjugation {
    OperatorMatrix M, M_inv;
    // M^-1 K M and its difference from the target
    OperatorMatrix conjugated, remainder;
    OrderEstimate order;
};
// M = exp Op(d); SmallnessError when ||Op(d)|| >= 1
Conjugation exp_conjugate(const SymbolGrid& d, const OperatorMatrix& K, const OperatorMatrix& target);
OperatorMatrix symbol_exp(const SymbolGrid& d, const OpLayout& lay, double sign = 1.0);

struct PatternReport {
    double real_to_real = 0;
    double parity = 0;
    double reversibility = 0;
    double max() const;
};
// generators of reversible flows anticommute with the reversal, transformations commute with it
PatternReport operator_patterns(const OperatorMatrix& a, bool generator = false);
double inverse_residual(const OperatorMatrix& a, const OperatorMatrix& a_inv);

struct TransformReport {
    OperatorMatrix T, T_inv;
    // Lambda - T (Lambda - D) T^-1 minus D1
    OperatorMatrix remainder;
    OrderEstimate order;           // of the remainder
    OrderEstimate order_original;  // of D - D1
    PatternReport patterns;
    double inverse_residual = 0;
};
// T = diag(M^-1, Mbar^-1) V with Mbar = exp Op(d(., -xi))
TransformReport assemble_T(const FirstOrderSystem& sys, const VeeTransform& v, const OperatorMatrix& M,
                           const OperatorMatrix& Mbar, const std::vector<double>& omega);

struct PsdoReport {
    FirstOrderSystem system;
    VeeTransform vee;
    SymbolSolve symbol;
    Conjugation conj;
    TransformReport transform;
    OrderEstimate order_d0, order_dm1, order_vee;
};
PsdoReport psdo_pipeline(const ReducedKG& r, const FrequencyVector& w, const OpLayout& lay,
                         double eta2 = default_eta2);
nlohmann::json to_json(const PsdoReport& r);

// (row_l, row_j, col_l, col_j, re, im) for entries above 1e-14; 2x2 systems write one file per block
void write_operator_csv(const OperatorMatrix& a, const std::string& path);

}  // namespace qpred
