#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "json.hpp"

namespace qpred {

using cplx = std::complex<double>;

enum class Par { even, odd, none };

struct ParityClass {
    Par phi = Par::none;
    Par x = Par::none;
};

// Truncated Fourier series on T^{nu+1}: modes (l_1..l_nu, j) with |l_i|, |j| <= cutoff.
// Coefficients are stored densely; the last axis is the spatial one.
class TorusFunction {
public:
    TorusFunction() = default;
    TorusFunction(int nu, int cutoff, bool is_real = true);

    static TorusFunction constant(int nu, int cutoff, double c);

    int nu() const { return nu_; }
    int cutoff() const { return n_; }
    bool is_real() const { return real_; }
    void set_real(bool r) { real_ = r; }
    int side() const { return 2 * n_ + 1; }
    int dims() const { return nu_ + 1; }
    std::size_t size() const { return c_.size(); }
    bool empty() const { return c_.empty(); }

    std::size_t index(const int* k) const;
    void mode_of(std::size_t flat, int* k) const;

    cplx& operator()(int l, int j);
    cplx operator()(int l, int j) const;
    cplx coeff(const std::vector<int>& l, int j) const;
    // writes the amplitude and, for real functions, its conjugate partner
    void set(const std::vector<int>& l, int j, cplx v);

    std::vector<cplx>& data() { return c_; }
    const std::vector<cplx>& data() const { return c_; }

    cplx mean() const;
    TorusFunction resized(int cutoff) const;
    void enforce_real();
    double max_abs() const;
    std::size_t nonzeros() const;

    TorusFunction& operator+=(const TorusFunction& o);
    TorusFunction& operator-=(const TorusFunction& o);
    TorusFunction& operator*=(cplx a);
    TorusFunction& operator*=(double a);
    TorusFunction operator-() const;

private:
    int nu_ = 1;
    int n_ = 0;
    bool real_ = true;
    std::vector<cplx> c_;
};

TorusFunction operator+(TorusFunction a, const TorusFunction& b);
TorusFunction operator-(TorusFunction a, const TorusFunction& b);
TorusFunction operator*(double s, TorusFunction a);
TorusFunction operator*(cplx s, TorusFunction a);
TorusFunction operator+(TorusFunction a, double c);
TorusFunction operator+(double c, TorusFunction a);

// Values on the uniform grid with m nodes per axis, same axis order as the coefficients.
struct GridValues {
    int nu = 1;
    int m = 0;
    std::vector<cplx> v;

    std::size_t size() const { return v.size(); }
    static double node(int k, int m);
    double sup() const;
};

GridValues synthesize(const TorusFunction& f, int m);
TorusFunction analyze(const GridValues& g, int cutoff, bool is_real = true);
TorusFunction analyze(const GridValues& g);
int default_grid(int cutoff);

// product on a padded grid; cutoff < 0 keeps max(N_f, N_g)
TorusFunction product(const TorusFunction& f, const TorusFunction& g, int cutoff = -1);
// direct coefficient convolution; exact up to rounding, skips zero amplitudes
TorusFunction convolve(const TorusFunction& f, const TorusFunction& g, int cutoff = -1);

// dir in [0, nu) is an angle, dir == nu is x
TorusFunction derivative(const TorusFunction& f, int dir);
TorusFunction omega_derivative(const TorusFunction& f, const std::vector<double>& omega);

double mode_weight(const int* k, int nu);
double sobolev_norm(const TorusFunction& f, double s);

TorusFunction parity_project(const TorusFunction& f, ParityClass p);
double parity_violation(const TorusFunction& f, ParityClass p);
// f(sphi * phi, sx * x) with signs +-1
TorusFunction reflect(const TorusFunction& f, bool flip_phi, bool flip_x);

// pointwise map evaluated on a grid of m nodes (0 picks a 2x padded grid) then re-analyzed
TorusFunction apply_pointwise(const TorusFunction& f, const std::function<double(double)>& fn,
                              int m = 0);
TorusFunction sample(int nu, int cutoff, const std::function<double(const double*)>& fn,
                     int m = 0);

// exact mode summation at arbitrary points of the torus
class Evaluator {
public:
    explicit Evaluator(const TorusFunction& f);
    cplx value(const double* theta) const;
    // gradient over all nu+1 variables
    cplx value_grad(const double* theta, cplx* grad) const;

private:
    TorusFunction f_;
    mutable std::vector<std::vector<cplx>> e_;
    mutable std::vector<cplx> partial_;
};

double evaluate_real(const TorusFunction& f, const double* theta);

// displacement field on T^{nu+1}: comp[i] shifts angle i (i < nu) or x (i == nu)
struct Displacement {
    std::vector<TorusFunction> comp;

    int nu() const { return comp.empty() ? 0 : comp.front().nu(); }
    int cutoff() const;
    static Displacement zero(int nu, int cutoff);
};

// grid surrogate of W^{k,inf}: max over derivatives of order <= k of the grid sup
double wkinf_norm(const TorusFunction& f, int order, int m = 0);
double wkinf_norm(const Displacement& p, int order, int m = 0);
double w1inf_norm(const Displacement& p, int m = 0);
// m = 0 picks a 2x padded grid; the composed function is not band-limited
TorusFunction compose_diffeo(const TorusFunction& h, const Displacement& p, int m = 0);
Displacement invert_diffeo(const Displacement& p, int m = 0);
// max over grid nodes of |y + q(y) + p(y + q(y)) - y|, i.e. the (id+p)o(id+q) defect
double roundtrip_error(const Displacement& p, const Displacement& q, int m = 0);

nlohmann::json to_json(const TorusFunction& f);
TorusFunction torus_from_json(const nlohmann::json& j);

}  // namespace qpred
