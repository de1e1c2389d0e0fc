#include "qpred/wave.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "qpred/errors.hpp"

namespace qpred {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

// real line transforms of a fixed size
class LineFFT {
public:
    explicit LineFFT(int m) : m_(m), re_(fftw_alloc_real(m)), sp_(fftw_alloc_complex(m / 2 + 1)) {
        fwd_ = fftw_plan_dft_r2c_1d(m, re_, sp_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_1d(m, sp_, re_, FFTW_ESTIMATE);
    }
    ~LineFFT() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(re_);
        fftw_free(sp_);
    }
    LineFFT(const LineFFT&) = delete;
    LineFFT& operator=(const LineFFT&) = delete;

    // normalized coefficients c_k, 0 <= k <= m/2
    std::vector<cplx> forward(const std::vector<double>& v) {
        std::copy(v.begin(), v.end(), re_);
        fftw_execute(fwd_);
        std::vector<cplx> c(m_ / 2 + 1);
        for (int k = 0; k <= m_ / 2; ++k) c[k] = cplx(sp_[k][0], sp_[k][1]) / double(m_);
        return c;
    }

    void derivative(const std::vector<double>& v, std::vector<double>& out) {
        std::copy(v.begin(), v.end(), re_);
        fftw_execute(fwd_);
        for (int k = 0; k <= m_ / 2; ++k) {
            const double kk = (2 * k == m_) ? 0.0 : double(k);
            const double a = sp_[k][0], b = sp_[k][1];
            sp_[k][0] = -kk * b / m_;
            sp_[k][1] = kk * a / m_;
        }
        fftw_execute(bwd_);
        out.assign(re_, re_ + m_);
    }

private:
    int m_;
    double* re_;
    fftw_complex* sp_;
    fftw_plan fwd_, bwd_;
};

double weight(int k, double s) { return std::pow(1.0 + double(k) * k, s / 2); }

double norm_from_coeffs(const std::vector<cplx>& c, int m, double s) {
    double acc = std::norm(c[0]);
    for (int k = 1; k <= m / 2; ++k) {
        const double w2 = weight(k, s) * weight(k, s);
        acc += (2 * k == m ? 1.0 : 2.0) * w2 * std::norm(c[k]);
    }
    return std::sqrt(acc);
}

// A(w t, x_i) on the grid, summing phase modes first
class CoefficientLine {
public:
    CoefficientLine(const TorusFunction& A, const std::vector<double>& omega, int m) : A_(A), omega_(omega), m_(m) {
        if (A.nu() != static_cast<int>(omega.size())) throw ShapeError("frequency vector and coefficient differ in nu");
        const int n = A.cutoff();
        ex_.assign(static_cast<std::size_t>(2 * n + 1) * m, cplx(0));
        for (int j = -n; j <= n; ++j)
            for (int i = 0; i < m; ++i) ex_[(j + n) * m + i] = std::polar(1.0, j * GridValues::node(i, m));
    }

    void at(double t, std::vector<double>& out) const {
        const int n = A_.cutoff(), nu = A_.nu();
        std::vector<cplx> cj(2 * n + 1, cplx(0));
        std::vector<int> k(nu + 1);
        for (std::size_t f = 0; f < A_.size(); ++f) {
            const cplx a = A_.data()[f];
            if (a == cplx(0)) continue;
            A_.mode_of(f, k.data());
            double ph = 0;
            for (int d = 0; d < nu; ++d) ph += omega_[d] * k[d] * t;
            cj[k[nu] + n] += a * std::polar(1.0, ph);
        }
        out.assign(m_, 0.0);
        for (int j = -n; j <= n; ++j) {
            if (cj[j + n] == cplx(0)) continue;
            for (int i = 0; i < m_; ++i) out[i] += (cj[j + n] * ex_[(j + n) * m_ + i]).real();
        }
    }

private:
    const TorusFunction& A_;
    std::vector<double> omega_;
    int m_;
    std::vector<cplx> ex_;
};

}  // namespace

double EvolutionState::sup_ratio() const {
    if (norms.empty() || norms.front() == 0) return 0;
    return *std::max_element(norms.begin(), norms.end()) / norms.front();
}

std::vector<double> sample_line(int grid, double (*fn)(double)) {
    std::vector<double> v(grid);
    for (int i = 0; i < grid; ++i) v[i] = fn(GridValues::node(i, grid));
    return v;
}

double line_sobolev_norm(const std::vector<double>& v, double s) {
    LineFFT fft(static_cast<int>(v.size()));
    return norm_from_coeffs(fft.forward(v), static_cast<int>(v.size()), s);
}

double wave_energy(const std::vector<double>& psi, const std::vector<double>& psi_t, const std::vector<double>& A) {
    const int m = static_cast<int>(psi.size());
    LineFFT fft(m);
    std::vector<double> px;
    fft.derivative(psi, px);
    double e = 0;
    for (int i = 0; i < m; ++i) e += psi_t[i] * psi_t[i] / A[i] + A[i] * px[i] * px[i];
    return 0.5 * e * two_pi / m;
}

EvolutionState evolve_wave(const TorusFunction& A, const std::vector<double>& omega, const std::vector<double>& f,
                           const std::vector<double>& g, const WaveOptions& opt) {
    const int m = opt.grid;
    if (static_cast<int>(f.size()) != m || static_cast<int>(g.size()) != m)
        throw ShapeError("initial data must be sampled on the evolution grid");
    if (opt.dt <= 0 || opt.T < 0) throw ShapeError("time step must be positive");

    // A over a sample of times bounds the admissible step
    const GridValues ag = synthesize(A, 2 * default_grid(A.cutoff()));
    double amin = HUGE_VAL, amax = -HUGE_VAL;
    for (const auto& v : ag.v) {
        amin = std::min(amin, v.real());
        amax = std::max(amax, v.real());
    }
    if (amin <= 0) throw DegenerateMetricError("A must stay positive");
    const double h = two_pi / m;
    const double dt_max = 0.25 * h * amin / amax;
    if (opt.dt > dt_max)
        throw StabilityError("dt = " + std::to_string(opt.dt) + " exceeds the bound " + std::to_string(dt_max));

    CoefficientLine line(A, omega, m);
    LineFFT fft(m);
    std::vector<double> a, psi = f, pi(m), tmp, flux(m), force;
    line.at(0.0, a);
    for (int i = 0; i < m; ++i) pi[i] = g[i] / a[i];

    EvolutionState st;
    st.grid = m;
    st.s = opt.s;
    st.dt = opt.dt;
    auto record = [&](double t, const std::vector<double>& acur) {
        std::vector<double> pt(m);
        for (int i = 0; i < m; ++i) pt[i] = acur[i] * pi[i];
        const double nrm = norm_from_coeffs(fft.forward(psi), m, opt.s + 1) + norm_from_coeffs(fft.forward(pt), m, opt.s);
        st.times.push_back(t);
        st.psi.push_back(psi);
        st.psi_t.push_back(std::move(pt));
        st.norms.push_back(nrm);
        if (!std::isfinite(nrm) || (st.norms.front() > 0 && nrm > 1e6 * st.norms.front()))
            throw DivergedError("norm grew past 1e6 times its initial value at t = " + std::to_string(t));
    };
    // d_x(A d_x psi)
    auto force_at = [&](const std::vector<double>& acur) {
        fft.derivative(psi, tmp);
        for (int i = 0; i < m; ++i) flux[i] = acur[i] * tmp[i];
        fft.derivative(flux, force);
    };

    record(0.0, a);
    const long steps = std::lround(opt.T / opt.dt);
    const long every = opt.record_dt > 0 ? std::max(1L, std::lround(opt.record_dt / opt.dt)) : 1L;
    std::vector<double> amid;
    force_at(a);
    for (long n = 0; n < steps; ++n) {
        const double t = n * opt.dt;
        for (int i = 0; i < m; ++i) pi[i] += 0.5 * opt.dt * force[i];
        line.at(t + 0.5 * opt.dt, amid);
        for (int i = 0; i < m; ++i) psi[i] += opt.dt * amid[i] * pi[i];
        line.at(t + opt.dt, a);
        force_at(a);
        for (int i = 0; i < m; ++i) pi[i] += 0.5 * opt.dt * force[i];
        if ((n + 1) % every == 0 || n + 1 == steps) record((n + 1) * opt.dt, a);
    }
    return st;
}

std::pair<double, double> dispersion_roots(double rho_plus, double rho_minus, double k) {
    if (rho_plus <= 0 || rho_minus <= 0) throw ShapeError("rho must be positive");
    const double a = rho_plus * rho_minus, b = -2 * (rho_plus - rho_minus) * k, c = -k * k;
    if (k == 0) return {0.0, 0.0};
    const double disc = std::sqrt(b * b - 4 * a * c);
    // the stable pairing of the two formulas
    const double q = -0.5 * (b + std::copysign(disc, b == 0 ? 1.0 : b));
    double r1 = q / a, r2 = c / q;
    if (r1 < r2) std::swap(r1, r2);
    return {r1, r2};
}

double dispersion_residual(double rho_plus, double rho_minus, double k, double W) {
    return rho_plus * rho_minus * W * W - 2 * (rho_plus - rho_minus) * k * W - k * k;
}

std::pair<double, double> chart_dispersion_roots(double rho_plus, double rho_minus, double k) {
    if (rho_plus <= 0 || rho_minus <= 0) throw ShapeError("rho must be positive");
    return {k / rho_plus, -k / rho_minus};
}

AlmostPeriodicReport almost_periodic_check(const EvolutionState& st, const NullChart& chart, int kmax,
                                           std::size_t max_snapshots) {
    AlmostPeriodicReport rep;
    rep.kmax = kmax;
    if (st.times.empty()) return rep;
    const std::size_t stride = std::max<std::size_t>(1, (st.times.size() + max_snapshots - 1) / max_snapshots);
    const int m = st.grid;
    const TorusFunction ts = chart.tau_shift(), rs = chart.r_shift();
    const Evaluator ets(ts), ers(rs);
    const int nu = ts.nu();

    std::vector<std::size_t> used;
    for (std::size_t n = 0; n < st.times.size(); n += stride) used.push_back(n);
    rep.snapshots_used = used.size();
    rep.samples = used.size() * m;

    // columns: k = 0 pair, then the two branches for 0 < |k| <= kmax
    const Eigen::Index cols = 2 + 4 * kmax;
    Eigen::MatrixXcd B(static_cast<Eigen::Index>(rep.samples), cols);
    Eigen::VectorXcd y(static_cast<Eigen::Index>(rep.samples));
    std::vector<double> theta(nu + 1);
    Eigen::Index row = 0;
    for (std::size_t n : used) {
        const double t = st.times[n];
        for (int i = 0; i < m; ++i, ++row) {
            const double x = GridValues::node(i, m);
            for (int d = 0; d < nu; ++d) theta[d] = std::fmod(chart.omega[d] * t, two_pi);
            theta[nu] = x;
            const double tau = t + ets.value(theta.data()).real();
            const double R = x + ers.value(theta.data()).real();
            B(row, 0) = 1.0;
            B(row, 1) = tau;
            Eigen::Index c = 2;
            for (int k = -kmax; k <= kmax; ++k) {
                if (k == 0) continue;
                const auto [wp, wm] = chart_dispersion_roots(chart.rho_plus, chart.rho_minus, k);
                B(row, c++) = std::polar(1.0, wp * tau + k * R);
                B(row, c++) = std::polar(1.0, wm * tau + k * R);
            }
            y(row) = st.psi[n][i];
        }
    }
    const Eigen::VectorXcd coef = B.colPivHouseholderQr().solve(y);
    const double total = y.squaredNorm();
    rep.residual_fraction = total > 0 ? (y - B * coef).squaredNorm() / total : 0.0;
    return rep;
}

nlohmann::json to_json(const AlmostPeriodicReport& r) {
    return {{"residual_fraction", r.residual_fraction},
            {"kmax", r.kmax},
            {"samples", r.samples},
            {"snapshots_used", r.snapshots_used}};
}

}  // namespace qpred
