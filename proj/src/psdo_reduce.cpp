#include "qpred/psdo_reduce.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <fstream>
#include <limits>

#include "qpred/errors.hpp"
#include "qpred/fitting.hpp"

namespace qpred {

namespace {

double c_of(int xi, double mass) {
    if (xi == 0) return 0.0;
    return xi / std::sqrt(double(xi) * xi + mass);
}

using Perm = std::vector<std::size_t>;

// index map of k -> (k with selected coordinates negated)
Perm reflection(const OpLayout& lay, bool flip_l, bool flip_j) {
    const std::size_t n = lay.size();
    Perm p(n);
    std::vector<int> k(lay.nu + 1);
    for (std::size_t i = 0; i < n; ++i) {
        lay.mode(i, k.data());
        for (int d = 0; d < lay.nu; ++d)
            if (flip_l) k[d] = -k[d];
        if (flip_j) k[lay.nu] = -k[lay.nu];
        p[i] = static_cast<std::size_t>(lay.index(k.data()));
    }
    return p;
}

Eigen::MatrixXcd permuted(const Eigen::MatrixXcd& x, const Perm& p, bool conj) {
    const std::size_t n = p.size();
    Eigen::MatrixXcd y(n, n);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t a = 0; a < n; ++a) {
            const cplx v = x(p[a], p[b]);
            y(a, b) = conj ? std::conj(v) : v;
        }
    return y;
}

double max_abs(const Eigen::MatrixXcd& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

OrderEstimate fit_values(const std::vector<double>& xi, const std::vector<double>& vals, int lo, int hi,
                         double floor = 0.0) {
    OrderEstimate e;
    e.xi_lo = lo;
    e.xi_hi = hi;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < xi.size(); ++i)
        if (vals[i] > std::max(floor, 1e-300)) {
            x.push_back(std::log(std::sqrt(1 + xi[i] * xi[i])));
            y.push_back(std::log(vals[i]));
        }
    if (x.size() < 2) {
        // identically zero on the window
        e.fitted_order = -std::numeric_limits<double>::infinity();
        return e;
    }
    const LineFit f = fit_line(x, y);
    e.fitted_order = f.slope;
    e.fit_residual = f.rms;
    return e;
}

}  // namespace

std::size_t OpLayout::size() const {
    std::size_t s = side_j();
    for (int d = 0; d < nu; ++d) s *= side_l();
    return s;
}

long OpLayout::index(const int* k) const {
    long i = 0;
    for (int d = 0; d < nu; ++d) {
        if (std::abs(k[d]) > L) return -1;
        i = i * side_l() + (k[d] + L);
    }
    if (std::abs(k[nu]) > N) return -1;
    return i * side_j() + (k[nu] + N);
}

void OpLayout::mode(std::size_t i, int* k) const {
    k[nu] = static_cast<int>(i % side_j()) - N;
    i /= side_j();
    for (int d = nu - 1; d >= 0; --d) {
        k[d] = static_cast<int>(i % side_l()) - L;
        i /= side_l();
    }
}

Eigen::MatrixXcd OperatorMatrix::block(int r, int c) const {
    const auto s = static_cast<Eigen::Index>(n());
    return m.block(r * s, c * s, s, s);
}

OperatorMatrix OperatorMatrix::identity(const OpLayout& lay, int blocks) {
    const auto s = static_cast<Eigen::Index>(lay.size()) * blocks;
    return {lay, blocks, Eigen::MatrixXcd::Identity(s, s)};
}

OperatorMatrix OperatorMatrix::zero(const OpLayout& lay, int blocks) {
    const auto s = static_cast<Eigen::Index>(lay.size()) * blocks;
    return {lay, blocks, Eigen::MatrixXcd::Zero(s, s)};
}

OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) { return {a.layout, a.blocks, a.m + b.m}; }
OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) { return {a.layout, a.blocks, a.m - b.m}; }
OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.blocks != b.blocks) throw ShapeError("block structure mismatch");
    return {a.layout, a.blocks, a.m * b.m};
}
OperatorMatrix operator*(cplx s, const OperatorMatrix& a) { return {a.layout, a.blocks, s * a.m}; }

OperatorMatrix block2(const OperatorMatrix& a11, const OperatorMatrix& a12, const OperatorMatrix& a21,
                      const OperatorMatrix& a22) {
    const auto s = static_cast<Eigen::Index>(a11.n());
    OperatorMatrix out = OperatorMatrix::zero(a11.layout, 2);
    out.m.block(0, 0, s, s) = a11.m;
    out.m.block(0, s, s, s) = a12.m;
    out.m.block(s, 0, s, s) = a21.m;
    out.m.block(s, s, s, s) = a22.m;
    return out;
}

OperatorMatrix multiplication_op(const TorusFunction& f, const OpLayout& lay) {
    if (f.nu() != lay.nu) throw ShapeError("multiplier and layout differ in nu");
    OperatorMatrix op = OperatorMatrix::zero(lay);
    const int dims = lay.nu + 1;
    std::vector<int> kc(dims), q(dims), kr(dims);
    std::vector<std::pair<std::vector<int>, cplx>> modes;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.data()[i] == cplx(0)) continue;
        f.mode_of(i, q.data());
        modes.emplace_back(q, f.data()[i]);
    }
    for (std::size_t col = 0; col < lay.size(); ++col) {
        lay.mode(col, kc.data());
        for (const auto& [qq, c] : modes) {
            for (int d = 0; d < dims; ++d) kr[d] = kc[d] + qq[d];
            const long row = lay.index(kr.data());
            if (row >= 0) op.m(row, col) += c;
        }
    }
    return op;
}

OperatorMatrix fourier_multiplier(const OpLayout& lay, const std::function<cplx(int)>& fn) {
    OperatorMatrix op = OperatorMatrix::zero(lay);
    std::vector<int> k(lay.nu + 1);
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k.data());
        op.m(i, i) = fn(k[lay.nu]);
    }
    return op;
}

OperatorMatrix phase_derivative_op(const OpLayout& lay, const std::vector<double>& omega) {
    OperatorMatrix op = OperatorMatrix::zero(lay);
    std::vector<int> k(lay.nu + 1);
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k.data());
        double s = 0;
        for (int d = 0; d < lay.nu; ++d) s += omega[d] * k[d];
        op.m(i, i) = cplx(0, s);
    }
    return op;
}

OperatorMatrix build_Dm(double mass, const OpLayout& lay, bool inverse) {
    if (mass < 0) throw ShapeError("negative mass");
    if (inverse && mass == 0) throw ZeroModeError("D_m has a zero mode at j = 0 when the mass vanishes");
    return fourier_multiplier(lay, [&](int j) {
        const double v = std::sqrt(double(j) * j + mass);
        return cplx(inverse ? 1.0 / v : v);
    });
}

SymbolGrid SymbolGrid::mirrored() const {
    SymbolGrid out = *this;
    for (int xi = -xi_max; xi <= xi_max; ++xi) out.at(xi) = at(-xi);
    for (auto& f : out.flagged) f = -f;
    return out;
}

double SymbolGrid::sup() const {
    double s = 0;
    for (const auto& f : slices) s = std::max(s, f.max_abs());
    return s;
}

OperatorMatrix quantize(const SymbolGrid& a, const OpLayout& lay) {
    if (a.xi_max < lay.N) throw ShapeError("symbol grid is narrower than the spatial truncation");
    OperatorMatrix op = OperatorMatrix::zero(lay);
    const int dims = lay.nu + 1;
    std::vector<int> kc(dims), q(dims), kr(dims);
    for (std::size_t col = 0; col < lay.size(); ++col) {
        lay.mode(col, kc.data());
        const TorusFunction& s = a.at(kc[lay.nu]);
        for (std::size_t i = 0; i < s.size(); ++i) {
            const cplx c = s.data()[i];
            if (c == cplx(0)) continue;
            s.mode_of(i, q.data());
            for (int d = 0; d < dims; ++d) kr[d] = kc[d] + q[d];
            const long row = lay.index(kr.data());
            if (row >= 0) op.m(row, col) += c;
        }
    }
    return op;
}

nlohmann::json to_json(const OrderEstimate& e) {
    nlohmann::json j;
    j["fitted_order"] = std::isfinite(e.fitted_order) ? nlohmann::json(e.fitted_order) : nlohmann::json("-inf");
    j["fit_residual"] = e.fit_residual;
    j["window"] = {e.xi_lo, e.xi_hi};
    return j;
}

OrderEstimate fit_operator_order(const OperatorMatrix& a, int xi_lo, int xi_hi, int lmax, double floor) {
    const OpLayout& lay = a.layout;
    if (xi_hi > lay.N) throw ShapeError("order window exceeds the truncation");
    const auto n = static_cast<Eigen::Index>(lay.size());
    std::vector<int> k(lay.nu + 1);
    std::vector<double> xs, vals;
    for (int xi = xi_lo; xi <= xi_hi; ++xi) {
        double v = 0;
        for (Eigen::Index col = 0; col < n; ++col) {
            lay.mode(col, k.data());
            if (k[lay.nu] != xi) continue;
            bool low = true;
            for (int d = 0; d < lay.nu; ++d) low = low && std::abs(k[d]) <= lmax;
            if (!low) continue;
            for (int b = 0; b < a.blocks; ++b) v = std::max(v, a.m.col(b * n + col).cwiseAbs().maxCoeff());
        }
        xs.push_back(xi);
        vals.push_back(v);
    }
    return fit_values(xs, vals, xi_lo, xi_hi, floor);
}

OrderEstimate fit_symbol_order(const SymbolGrid& a, int xi_lo, int xi_hi) {
    std::vector<double> xs, vals;
    for (int xi = xi_lo; xi <= xi_hi; ++xi) {
        xs.push_back(xi);
        vals.push_back(std::max(a.at(xi).max_abs(), a.at(-xi).max_abs()));
    }
    return fit_values(xs, vals, xi_lo, xi_hi);
}

FirstOrderSystem to_first_order(const ReducedKG& r, const OpLayout& lay) {
    if (r.stage != KGStage::time_removed) throw ShapeError("first order form needs the time-removed stage");
    const auto D = build_Dm(r.mass, lay), Di = build_Dm(r.mass, lay, true);
    const auto dx = fourier_multiplier(lay, [](int j) { return cplx(0, j); });
    const auto wr = multiplication_op(r.GR, lay) * dx * Di;
    const auto wg = multiplication_op(r.G, lay) * Di;
    const cplx a1(0, 1.0 / r.alpha), a2(0, 0.5 / r.alpha);
    const auto z = OperatorMatrix::zero(lay);
    FirstOrderSystem s;
    s.alpha = r.alpha;
    s.mass = r.mass;
    s.D1 = block2(a1 * D, z, z, cplx(-1) * (a1 * D));
    s.D0 = a2 * block2(wr, wr, cplx(-1) * wr, cplx(-1) * wr);
    s.Dm1 = a2 * block2(wg, wg, cplx(-1) * wg, cplx(-1) * wg);
    return s;
}

VeeTransform vee_transform(const TorusFunction& GR, double mass, double /*alpha*/, const OpLayout& lay, double eta2) {
    const double size = sobolev_norm(GR, default_s0);
    if (size > eta2)
        throw SmallnessError("||G^R||_s0 = " + std::to_string(size) + " exceeds " + std::to_string(eta2));
    const auto Di = build_Dm(mass, lay, true);
    const auto dx = fourier_multiplier(lay, [](int j) { return cplx(0, j); });
    const auto S = cplx(0.25) * (multiplication_op(GR, lay) * dx * Di * Di);
    const auto R = block2(S, S, S, S);
    VeeTransform v;
    v.V = OperatorMatrix::identity(lay, 2) + R;
    v.V_inv = OperatorMatrix::identity(lay, 2);
    Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(v.V.m.rows(), v.V.m.cols());
    double prev = 1.0;
    for (int k = 1; k <= 200; ++k) {
        term = -(R.m * term);
        const double t = max_abs(term);
        v.V_inv.m += term;
        v.neumann_terms = k;
        if (t < 1e-18) break;
        if (k > 3 && t > prev) throw SmallnessError("Neumann series for V does not contract");
        if (k == 200) throw SmallnessError("Neumann series for V did not converge");
        prev = t;
    }
    v.inverse_residual = inverse_residual(v.V, v.V_inv);
    return v;
}

SymbolGrid h_symbol(const TorusFunction& GR, double mass, int xi_max) {
    SymbolGrid h;
    h.xi_max = xi_max;
    for (int xi = -xi_max; xi <= xi_max; ++xi) h.slices.push_back((0.5 * c_of(xi, mass)) * GR);
    return h;
}

SymbolSolve solve_symbol_d(const SymbolGrid& h, const FrequencyVector& w, double alpha, double mass) {
    SymbolSolve out;
    out.d.xi_max = out.residual.xi_max = h.xi_max;
    std::vector<bool> bad;
    for (int xi = -h.xi_max; xi <= h.xi_max; ++xi) {
        const double c = c_of(xi, mass);
        TorusFunction rhs = h.at(xi);
        const int nu = rhs.nu();
        std::vector<int> k(nu + 1);
        // the mean, and at xi = 0 every phase-independent mode, cannot be reached
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            rhs.mode_of(i, k.data());
            bool l0 = true;
            for (int d = 0; d < nu; ++d) l0 = l0 && k[d] == 0;
            if (l0 && (c == 0 || k[nu] == 0)) rhs.data()[i] = 0;
        }
        TorusFunction d(rhs.nu(), rhs.cutoff());
        bool flagged = false;
        try {
            if (c != 0 && !check_diophantine(w, -c / alpha, rhs.cutoff()).passed) flagged = true;
            d = c == 0 ? invert_phase_derivative((-1.0 / alpha) * rhs, w) : invert_transport((-1.0 / alpha) * rhs, w, -c / alpha);
        } catch (const SmallDivisorError&) {
            flagged = true;
        }
        if (flagged) out.d.flagged.push_back(xi);
        bad.push_back(flagged);
        out.d.slices.push_back(d);
    }
    // flagged slices take the average of their nearest unflagged neighbours
    for (int xi : out.d.flagged) {
        TorusFunction acc(h.at(xi).nu(), h.at(xi).cutoff());
        int cnt = 0;
        for (int nb : {xi - 1, xi + 1})
            if (std::abs(nb) <= h.xi_max && !bad[nb + h.xi_max]) {
                acc += out.d.at(nb);
                ++cnt;
            }
        if (cnt) acc *= 1.0 / cnt;
        out.d.at(xi) = acc;
    }
    for (int xi = -h.xi_max; xi <= h.xi_max; ++xi) {
        const double c = c_of(xi, mass);
        // -alpha (w.d_phi d - (c/alpha) d_x d)
        TorusFunction lhs = (-alpha) * transport_apply(out.d.at(xi), w, -c / alpha);
        out.residual.slices.push_back(h.at(xi) - lhs);
    }
    out.residual_sup = out.residual.sup();
    out.residual_order = fit_symbol_order(out.residual, 6, std::min(24, h.xi_max));
    return out;
}

OperatorMatrix symbol_exp(const SymbolGrid& d, const OpLayout& lay, double sign) {
    OperatorMatrix op = quantize(d, lay);
    const double norm = op.m.cwiseAbs().rowwise().sum().maxCoeff();
    if (norm >= 1) throw SmallnessError("Op(d) has norm " + std::to_string(norm) + ", exponential not attempted");
    Eigen::MatrixXcd a = sign * op.m;
    op.m = a.exp();
    return op;
}

Conjugation exp_conjugate(const SymbolGrid& d, const OperatorMatrix& K, const OperatorMatrix& target) {
    if (K.blocks != 1) throw ShapeError("scalar operator expected");
    Conjugation c;
    c.M = symbol_exp(d, K.layout, 1.0);
    c.M_inv = symbol_exp(d, K.layout, -1.0);
    c.conjugated = c.M_inv * K * c.M;
    c.remainder = c.conjugated - target;
    // differences of operators of size |K| carry rounding of that size
    c.order = fit_operator_order(c.remainder, 6, std::min(24, K.layout.N), 1, 1e-13 * max_abs(K.m));
    return c;
}

double PatternReport::max() const { return std::max({real_to_real, parity, reversibility}); }

PatternReport operator_patterns(const OperatorMatrix& a, bool generator) {
    const double sg = generator ? -1.0 : 1.0;
    const OpLayout& lay = a.layout;
    const Perm neg = reflection(lay, true, true), px = reflection(lay, false, true), pl = reflection(lay, true, false);
    PatternReport r;
    if (a.blocks == 1) {
        const auto& x = a.m;
        r.real_to_real = max_abs(x - permuted(x, neg, true));
        r.parity = max_abs(x - permuted(x, px, false));
        r.reversibility = max_abs(permuted(x, neg, true) - sg * permuted(x, pl, false));
        return r;
    }
    const auto a11 = a.block(0, 0), a12 = a.block(0, 1), a21 = a.block(1, 0), a22 = a.block(1, 1);
    r.real_to_real = std::max(max_abs(a22 - permuted(a11, neg, true)), max_abs(a21 - permuted(a12, neg, true)));
    for (const auto* b : {&a11, &a12, &a21, &a22}) r.parity = std::max(r.parity, max_abs(*b - permuted(*b, px, false)));
    r.reversibility = std::max(max_abs(a22 - sg * permuted(a11, pl, false)), max_abs(a21 - sg * permuted(a12, pl, false)));
    return r;
}

double inverse_residual(const OperatorMatrix& a, const OperatorMatrix& a_inv) {
    Eigen::MatrixXcd p = a.m * a_inv.m;
    p.diagonal().array() -= 1.0;
    return max_abs(p);
}

TransformReport assemble_T(const FirstOrderSystem& sys, const VeeTransform& v, const OperatorMatrix& M,
                           const OperatorMatrix& Mbar, const std::vector<double>& omega) {
    const OpLayout& lay = M.layout;
    const auto z = OperatorMatrix::zero(lay);
    const OperatorMatrix Mi{lay, 1, M.m.partialPivLu().inverse()};
    const OperatorMatrix Mbi{lay, 1, Mbar.m.partialPivLu().inverse()};
    TransformReport t;
    t.T = block2(Mi, z, z, Mbi) * v.V;
    t.T_inv = v.V_inv * block2(M, z, z, Mbar);
    const auto lam = phase_derivative_op(lay, omega);
    const auto lam2 = block2(lam, z, z, lam);
    const auto gen = sys.generator();
    const auto transformed = lam2 - t.T * (lam2 - gen) * t.T_inv;
    t.remainder = transformed - sys.D1;
    const int hi = std::min(24, lay.N);
    t.order = fit_operator_order(t.remainder, 6, hi, 1, 1e-13 * max_abs((lam2 - gen).m));
    t.order_original = fit_operator_order(gen - sys.D1, 6, hi);
    t.patterns = operator_patterns(t.T);
    t.inverse_residual = inverse_residual(t.T, t.T_inv);
    return t;
}

PsdoReport psdo_pipeline(const ReducedKG& r, const FrequencyVector& w, const OpLayout& lay, double eta2) {
    PsdoReport p;
    p.system = to_first_order(r, lay);
    p.vee = vee_transform(r.GR, r.mass, r.alpha, lay, eta2);
    p.symbol = solve_symbol_d(h_symbol(r.GR, r.mass, lay.N), w, r.alpha, r.mass);
    const auto D = build_Dm(r.mass, lay), Di = build_Dm(r.mass, lay, true);
    const auto dx = fourier_multiplier(lay, [](int j) { return cplx(0, j); });
    const auto lam = phase_derivative_op(lay, w.omega);
    const cplx a1(0, 1.0 / r.alpha), a2(0, 0.5 / r.alpha);
    const auto target = lam - a1 * D;
    const auto K = target - a2 * (multiplication_op(r.GR, lay) * dx * Di);
    p.conj = exp_conjugate(p.symbol.d, K, target);
    const auto Mbar = symbol_exp(p.symbol.d.mirrored(), lay, 1.0);
    p.transform = assemble_T(p.system, p.vee, p.conj.M, Mbar, w.omega);
    const int hi = std::min(24, lay.N);
    p.order_d0 = fit_operator_order(p.system.D0, 6, hi);
    p.order_dm1 = fit_operator_order(p.system.Dm1, 6, hi);
    p.order_vee = fit_operator_order(p.vee.V - OperatorMatrix::identity(lay, 2), 6, hi);
    return p;
}

nlohmann::json to_json(const PsdoReport& r) {
    nlohmann::json j;
    j["order_D0"] = to_json(r.order_d0);
    j["order_Dm1"] = to_json(r.order_dm1);
    j["order_V_minus_id"] = to_json(r.order_vee);
    j["neumann_terms"] = r.vee.neumann_terms;
    j["V_inverse_residual"] = r.vee.inverse_residual;
    j["symbol_residual_sup"] = r.symbol.residual_sup;
    j["symbol_residual_order"] = to_json(r.symbol.residual_order);
    j["flagged_xi"] = r.symbol.d.flagged;
    j["conjugation_remainder_order"] = to_json(r.conj.order);
    j["remainder_order"] = to_json(r.transform.order);
    j["original_order"] = to_json(r.transform.order_original);
    j["T_inverse_residual"] = r.transform.inverse_residual;
    j["T_patterns"] = {{"real_to_real", r.transform.patterns.real_to_real},
                       {"parity", r.transform.patterns.parity},
                       {"reversibility", r.transform.patterns.reversibility}};
    return j;
}

void write_operator_csv(const OperatorMatrix& a, const std::string& path) {
    const OpLayout& lay = a.layout;
    auto write_block = [&](const Eigen::MatrixXcd& x, const std::string& file) {
        std::ofstream out(file);
        if (!out) throw Error("cannot write " + file);
        out << "row_l,row_j,col_l,col_j,re,im\n";
        out.precision(17);
        std::vector<int> kr(lay.nu + 1), kc(lay.nu + 1);
        auto phase = [&](const std::vector<int>& k) {
            std::string s;
            for (int d = 0; d < lay.nu; ++d) s += (d ? ";" : "") + std::to_string(k[d]);
            return s;
        };
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                if (std::abs(x(r, c)) <= 1e-14) continue;
                lay.mode(r, kr.data());
                lay.mode(c, kc.data());
                out << phase(kr) << ',' << kr[lay.nu] << ',' << phase(kc) << ',' << kc[lay.nu] << ','
                    << x(r, c).real() << ',' << x(r, c).imag() << '\n';
            }
    };
    if (a.blocks == 1) {
        write_block(a.m, path);
        return;
    }
    const auto dot = path.rfind('.');
    const std::string stem = dot == std::string::npos ? path : path.substr(0, dot);
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            write_block(a.block(r, c), stem + "_" + std::to_string(r + 1) + std::to_string(c + 1) + ext);
}

}  // namespace qpred
