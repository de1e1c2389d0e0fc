#include "qpred/straighten.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace qpred {

namespace {

Displacement lift(const TorusFunction& beta) {
    Displacement p = Displacement::zero(beta.nu(), beta.cutoff());
    p.comp[beta.nu()] = beta;
    return p;
}

void keep_band(TorusFunction& f, int band) {
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        for (int v : k)
            if (std::abs(v) > band) {
                f.data()[i] = 0.0;
                break;
            }
    }
}

// coefficients at rounding level relative to the largest one carry no information
void drop_roundoff(TorusFunction& f) {
    const double floor = 8 * std::numeric_limits<double>::epsilon() * f.max_abs();
    for (auto& c : f.data())
        if (std::abs(c) <= floor) c = 0.0;
}

void zero_mean(TorusFunction& f) {
    std::vector<int> k(f.dims(), 0);
    f.data()[f.index(k.data())] = 0.0;
}

std::string describe(const DiophReport& rep) {
    std::ostringstream os;
    os << "(";
    for (int v : rep.worst_l) os << v << ",";
    os << rep.worst_j << ")";
    return os.str();
}

}  // namespace

double smallness_delta(const TorusFunction& a0, const FrequencyVector& w, double s1) {
    return sobolev_norm(a0, s1) / w.gamma;
}

TorusFunction straighten_residual(const TorusFunction& a0, const TorusFunction& beta, double m,
                                  const FrequencyVector& w) {
    const int n = beta.cutoff();
    TorusFunction r = omega_derivative(beta, w.omega);
    r += convolve(a0 + 1.0, derivative(beta, beta.nu()) + 1.0, n);
    return r + (-m);
}

StraighteningResult straighten_newton(const TorusFunction& a0, const FrequencyVector& w,
                                      const StraightenOptions& opt, const TorusFunction* beta0) {
    if (a0.nu() != w.nu()) throw ShapeError("a0 and frequency vector disagree on nu");
    const double delta = smallness_delta(a0, w, opt.s1);
    if (delta > opt.smallness)
        throw SmallnessError("gamma^-1 ||a0||_s1 = " + std::to_string(delta) + " exceeds " +
                             std::to_string(opt.smallness));
    const int n = a0.cutoff();
    const int band = std::max(1, n - opt.band_margin);
    StraighteningResult cur;
    cur.beta = beta0 ? beta0->resized(n) : TorusFunction(a0.nu(), n);
    zero_mean(cur.beta);
    cur.m_inf = 1.0;
    StraighteningResult best;
    best.residual_s0 = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int it = 0;; ++it) {
        TorusFunction r = straighten_residual(a0, cur.beta, cur.m_inf, w);
        cur.residual_s0 = sobolev_norm(r, opt.s0);
        cur.iterations = it;
        if (cur.residual_s0 <= opt.tol) {
            cur.converged = true;
            return cur;
        }
        if (cur.residual_s0 < 0.5 * best.residual_s0)
            stalled = 0;
        else
            ++stalled;
        if (cur.residual_s0 < best.residual_s0) best = cur;
        if (it >= opt.max_iter || stalled >= 3) break;

        const Displacement psi = lift(cur.beta);
        TorusFunction rt = compose_diffeo(r, invert_diffeo(psi));
        cur.m_inf += rt.mean().real();
        zero_mean(rt);
        keep_band(rt, band);
        if (opt.check_divisors) {
            DiophReport rep = check_diophantine(w, cur.m_inf, 2 * n);
            if (!rep.passed)
                throw SmallDivisorError("diophantine check failed for the running rotation number",
                                        describe(rep), rep.worst_ratio);
        }
        TorusFunction g = invert_transport(-rt, w, cur.m_inf);
        TorusFunction step = compose_diffeo(g, psi);
        keep_band(step, band);
        drop_roundoff(step);
        cur.beta += step;
        zero_mean(cur.beta);
    }
    throw NoConvergence("straightening stalled at residual " + std::to_string(best.residual_s0), best);
}

StraighteningResult straighten_collocation(const TorusFunction& a0, const FrequencyVector& w, double s0) {
    if (a0.nu() != w.nu()) throw ShapeError("a0 and frequency vector disagree on nu");
    const int nu = a0.nu(), dims = nu + 1, n = a0.cutoff();
    TorusFunction beta(nu, n, false);
    const std::size_t size = beta.size();
    std::vector<int> zero(dims, 0);
    const std::size_t mean_idx = beta.index(zero.data());

    // unknowns are the beta modes, with the mean slot reused for m
    std::vector<Eigen::Triplet<cplx>> trip;
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(size));
    std::vector<int> k(dims), q(dims), t(dims);
    for (std::size_t c = 0; c < size; ++c) {
        beta.mode_of(c, k.data());
        if (c == mean_idx) {
            trip.emplace_back(static_cast<int>(mean_idx), static_cast<int>(c), -1.0);
            continue;
        }
        double div = k[nu];
        for (int d = 0; d < nu; ++d) div += w.omega[d] * k[d];
        trip.emplace_back(static_cast<int>(c), static_cast<int>(c), cplx(0, div));
        if (k[nu] == 0) continue;
        for (std::size_t a = 0; a < a0.size(); ++a) {
            const cplx amp = a0.data()[a];
            if (amp == cplx(0)) continue;
            a0.mode_of(a, q.data());
            bool inside = true;
            for (int d = 0; d < dims; ++d) {
                t[d] = k[d] + q[d];
                inside = inside && std::abs(t[d]) <= n;
            }
            if (!inside) continue;
            trip.emplace_back(static_cast<int>(beta.index(t.data())), static_cast<int>(c), amp * cplx(0, k[nu]));
        }
    }
    for (std::size_t a = 0; a < a0.size(); ++a) {
        a0.mode_of(a, q.data());
        bool inside = true;
        for (int d = 0; d < dims; ++d) inside = inside && std::abs(q[d]) <= n;
        if (inside) rhs(static_cast<Eigen::Index>(beta.index(q.data()))) -= a0.data()[a];
    }
    rhs(static_cast<Eigen::Index>(mean_idx)) -= 1.0;

    Eigen::SparseMatrix<cplx> mat(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
    mat.setFromTriplets(trip.begin(), trip.end());
    mat.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    lu.compute(mat);
    if (lu.info() != Eigen::Success) throw SmallDivisorError("collocation system is singular", "", 0.0);
    Eigen::VectorXcd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite())
        throw SmallDivisorError("collocation solve failed", "", 0.0);

    StraighteningResult res;
    for (std::size_t c = 0; c < size; ++c) beta.data()[c] = sol(static_cast<Eigen::Index>(c));
    res.m_inf = beta.data()[mean_idx].real();
    beta.data()[mean_idx] = 0.0;
    beta.set_real(a0.is_real());
    if (beta.is_real()) beta.enforce_real();
    res.beta = beta;
    res.residual_s0 = sobolev_norm(straighten_residual(a0, res.beta, res.m_inf, w), s0);
    res.iterations = 1;
    res.converged = res.residual_s0 <= 1e-10;
    return res;
}

PushforwardReport pushforward_check(const TorusFunction& a0, const TorusFunction& beta, double m,
                                    const FrequencyVector& w, double s0) {
    TorusFunction r = straighten_residual(a0, beta, m, w);
    PushforwardReport rep;
    rep.residual = sobolev_norm(r, s0);
    rep.composed = sobolev_norm(compose_diffeo(r, invert_diffeo(lift(beta))), s0);
    return rep;
}

nlohmann::json to_json(const StraighteningResult& r) {
    return {{"m_inf", r.m_inf},
            {"beta", to_json(r.beta)},
            {"residual", r.residual_s0},
            {"iterations", r.iterations},
            {"converged", r.converged}};
}

}  // namespace qpred
