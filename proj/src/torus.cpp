#include "qpred/torus.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "qpred/errors.hpp"

namespace qpred {

namespace {

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

void fft_inplace(std::vector<cplx>& a, int dims, int m, int sign) {
    std::vector<int> n(dims, m);
    auto* p = reinterpret_cast<fftw_complex*>(a.data());
    fftw_plan plan = fftw_plan_dft(dims, n.data(), p, p, sign, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
}

// rows of coefficients over the angle axes summed at the angle nodes: out[node][j]
std::vector<cplx> angle_synthesis(const TorusFunction& h, int m) {
    const int nu = h.nu(), n = h.cutoff(), side = h.side();
    const std::size_t nodes = ipow(m, nu);
    std::vector<cplx> tab(static_cast<std::size_t>(m) * side);
    for (int k = 0; k < m; ++k)
        for (int l = -n; l <= n; ++l)
            tab[k * side + (l + n)] = std::polar(1.0, l * GridValues::node(k, m));
    std::vector<cplx> out(nodes * side, cplx(0));
    const std::size_t rows = ipow(side, nu);
    std::vector<int> kn(nu), ln(nu);
    for (std::size_t node = 0; node < nodes; ++node) {
        std::size_t t = node;
        for (int d = nu - 1; d >= 0; --d) {
            kn[d] = static_cast<int>(t % m);
            t /= m;
        }
        cplx* dst = &out[node * side];
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t t2 = r;
            cplx fac(1.0);
            for (int d = nu - 1; d >= 0; --d) {
                int li = static_cast<int>(t2 % side);
                t2 /= side;
                fac *= tab[kn[d] * side + li];
            }
            const cplx* src = &h.data()[r * side];
            for (int j = 0; j < side; ++j) dst[j] += fac * src[j];
        }
    }
    return out;
}

bool angles_vanish(const Displacement& p) {
    for (int i = 0; i < p.nu(); ++i)
        for (const auto& c : p.comp[i].data())
            if (c != cplx(0)) return false;
    return true;
}

std::vector<double> real_grid(const TorusFunction& f, int m) {
    GridValues g = synthesize(f, m);
    std::vector<double> r(g.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = g.v[i].real();
    return r;
}

void node_coords(std::size_t flat, int dims, int m, double* theta) {
    for (int d = dims - 1; d >= 0; --d) {
        theta[d] = GridValues::node(static_cast<int>(flat % m), m);
        flat /= m;
    }
}

}  // namespace

TorusFunction::TorusFunction(int nu, int cutoff, bool is_real)
    : nu_(nu), n_(cutoff), real_(is_real) {
    if (nu < 1 || cutoff < 0) throw ShapeError("torus function needs nu >= 1 and cutoff >= 0");
    c_.assign(ipow(2 * cutoff + 1, nu + 1), cplx(0));
}

TorusFunction TorusFunction::constant(int nu, int cutoff, double c) {
    TorusFunction f(nu, cutoff, true);
    f.c_[f.c_.size() / 2] = c;
    return f;
}

std::size_t TorusFunction::index(const int* k) const {
    std::size_t idx = 0;
    const int s = side();
    for (int d = 0; d <= nu_; ++d) idx = idx * s + static_cast<std::size_t>(k[d] + n_);
    return idx;
}

void TorusFunction::mode_of(std::size_t flat, int* k) const {
    const int s = side();
    for (int d = nu_; d >= 0; --d) {
        k[d] = static_cast<int>(flat % s) - n_;
        flat /= s;
    }
}

cplx& TorusFunction::operator()(int l, int j) {
    return c_[static_cast<std::size_t>(l + n_) * side() + (j + n_)];
}

cplx TorusFunction::operator()(int l, int j) const {
    if (std::abs(l) > n_ || std::abs(j) > n_) return 0.0;
    return c_[static_cast<std::size_t>(l + n_) * side() + (j + n_)];
}

cplx TorusFunction::coeff(const std::vector<int>& l, int j) const {
    std::vector<int> k(l);
    k.push_back(j);
    for (int v : k)
        if (std::abs(v) > n_) return 0.0;
    return c_[index(k.data())];
}

void TorusFunction::set(const std::vector<int>& l, int j, cplx v) {
    std::vector<int> k(l);
    k.push_back(j);
    for (int x : k)
        if (std::abs(x) > n_) throw ShapeError("mode outside the cutoff");
    c_[index(k.data())] = v;
    if (real_) {
        for (auto& x : k) x = -x;
        c_[index(k.data())] = std::conj(v);
    }
}

cplx TorusFunction::mean() const { return c_.empty() ? cplx(0) : c_[c_.size() / 2]; }

TorusFunction TorusFunction::resized(int cutoff) const {
    TorusFunction r(nu_, cutoff, real_);
    std::vector<int> k(nu_ + 1);
    for (std::size_t i = 0; i < c_.size(); ++i) {
        if (c_[i] == cplx(0)) continue;
        mode_of(i, k.data());
        bool inside = true;
        for (int v : k) inside = inside && std::abs(v) <= cutoff;
        if (inside) r.c_[r.index(k.data())] = c_[i];
    }
    return r;
}

void TorusFunction::enforce_real() {
    // the flat layout is point-symmetric: mode -k sits at size-1-i
    const std::size_t n = c_.size();
    for (std::size_t i = 0; i <= n / 2; ++i) {
        cplx a = c_[i], b = c_[n - 1 - i];
        cplx s = 0.5 * (a + std::conj(b));
        c_[i] = s;
        c_[n - 1 - i] = std::conj(s);
    }
    real_ = true;
}

double TorusFunction::max_abs() const {
    double m = 0;
    for (const auto& c : c_) m = std::max(m, std::abs(c));
    return m;
}

std::size_t TorusFunction::nonzeros() const {
    return static_cast<std::size_t>(
        std::count_if(c_.begin(), c_.end(), [](const cplx& c) { return c != cplx(0); }));
}

TorusFunction& TorusFunction::operator+=(const TorusFunction& o) {
    if (o.empty()) return *this;
    if (empty()) return *this = o;
    if (o.nu_ != nu_) throw ShapeError("nu mismatch");
    if (o.n_ > n_) *this = resized(o.n_);
    if (o.n_ == n_) {
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    } else {
        TorusFunction b = o.resized(n_);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += b.c_[i];
    }
    real_ = real_ && o.real_;
    return *this;
}

TorusFunction& TorusFunction::operator-=(const TorusFunction& o) { return *this += -o; }

TorusFunction& TorusFunction::operator*=(cplx a) {
    for (auto& c : c_) c *= a;
    if (a.imag() != 0.0) real_ = false;
    return *this;
}

TorusFunction& TorusFunction::operator*=(double a) {
    for (auto& c : c_) c *= a;
    return *this;
}

TorusFunction TorusFunction::operator-() const {
    TorusFunction r(*this);
    for (auto& c : r.c_) c = -c;
    return r;
}

TorusFunction operator+(TorusFunction a, const TorusFunction& b) { return a += b; }
TorusFunction operator-(TorusFunction a, const TorusFunction& b) { return a -= b; }
TorusFunction operator*(double s, TorusFunction a) { return a *= s; }
TorusFunction operator*(cplx s, TorusFunction a) { return a *= s; }
TorusFunction operator+(TorusFunction a, double c) {
    a.data()[a.size() / 2] += c;
    return a;
}
TorusFunction operator+(double c, TorusFunction a) { return std::move(a) + c; }

double GridValues::node(int k, int m) { return 2.0 * std::numbers::pi * k / m; }

double GridValues::sup() const {
    double s = 0;
    for (const auto& x : v) s = std::max(s, std::abs(x));
    return s;
}

int default_grid(int cutoff) { return 2 * cutoff + 2; }

GridValues synthesize(const TorusFunction& f, int m) {
    if (m < 2 * f.cutoff() + 2)
        throw AliasingError("grid of " + std::to_string(m) + " nodes is too small for cutoff " +
                            std::to_string(f.cutoff()));
    const int dims = f.dims();
    GridValues g{f.nu(), m, std::vector<cplx>(ipow(m, dims), cplx(0))};
    std::vector<int> k(dims);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.data()[i] == cplx(0)) continue;
        f.mode_of(i, k.data());
        std::size_t idx = 0;
        for (int d = 0; d < dims; ++d) idx = idx * m + static_cast<std::size_t>((k[d] + m) % m);
        g.v[idx] = f.data()[i];
    }
    fft_inplace(g.v, dims, m, FFTW_BACKWARD);
    if (f.is_real())
        for (auto& x : g.v) x = cplx(x.real(), 0.0);
    return g;
}

TorusFunction analyze(const GridValues& g, int cutoff, bool is_real) {
    const int dims = g.nu + 1;
    if (g.m < 1 || g.v.size() != ipow(g.m, dims))
        throw ShapeError("grid values do not form a uniform grid");
    if (g.m < 2 * cutoff + 2)
        throw ShapeError("grid of " + std::to_string(g.m) + " nodes cannot resolve cutoff " +
                         std::to_string(cutoff));
    std::vector<cplx> a(g.v);
    fft_inplace(a, dims, g.m, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(a.size());
    TorusFunction f(g.nu, cutoff, is_real);
    std::vector<int> k(dims);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        std::size_t idx = 0;
        for (int d = 0; d < dims; ++d) idx = idx * g.m + static_cast<std::size_t>((k[d] + g.m) % g.m);
        f.data()[i] = a[idx] * scale;
    }
    if (is_real) f.enforce_real();
    return f;
}

TorusFunction analyze(const GridValues& g) { return analyze(g, (g.m - 2) / 2, true); }

TorusFunction product(const TorusFunction& f, const TorusFunction& g, int cutoff) {
    if (f.nu() != g.nu()) throw ShapeError("product of functions with different nu");
    const int nmax = std::max(f.cutoff(), g.cutoff());
    const int nout = cutoff < 0 ? nmax : cutoff;
    // no aliasing into retained modes once m > N_f + N_g + N_out
    int m = std::max(2 * default_grid(nmax), f.cutoff() + g.cutoff() + nout + 2);
    m += m % 2;
    GridValues a = synthesize(f, m), b = synthesize(g, m);
    for (std::size_t i = 0; i < a.size(); ++i) a.v[i] *= b.v[i];
    return analyze(a, nout, f.is_real() && g.is_real());
}

TorusFunction convolve(const TorusFunction& f, const TorusFunction& g, int cutoff) {
    if (f.nu() != g.nu()) throw ShapeError("product of functions with different nu");
    const int nf = f.cutoff(), ng = g.cutoff();
    const int no = cutoff < 0 ? std::max(nf, ng) : cutoff;
    TorusFunction out(f.nu(), no, f.is_real() && g.is_real());
    if (f.nu() == 1) {
        const int sf = f.side(), sg = g.side(), so = out.side();
        for (int l1 = -nf; l1 <= nf; ++l1)
            for (int j1 = -nf; j1 <= nf; ++j1) {
                const cplx a = f.data()[(l1 + nf) * sf + (j1 + nf)];
                if (a == cplx(0)) continue;
                const int l2lo = std::max(-ng, -no - l1), l2hi = std::min(ng, no - l1);
                const int j2lo = std::max(-ng, -no - j1), j2hi = std::min(ng, no - j1);
                for (int l2 = l2lo; l2 <= l2hi; ++l2) {
                    const cplx* src = &g.data()[(l2 + ng) * sg + (j2lo + ng)];
                    cplx* dst = &out.data()[(l1 + l2 + no) * so + (j1 + j2lo + no)];
                    for (int j2 = j2lo; j2 <= j2hi; ++j2) *dst++ += a * *src++;
                }
            }
        return out;
    }
    const int dims = f.dims();
    std::vector<int> k1(dims), k2(dims), ks(dims);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const cplx a = f.data()[i];
        if (a == cplx(0)) continue;
        f.mode_of(i, k1.data());
        for (std::size_t q = 0; q < g.size(); ++q) {
            const cplx b = g.data()[q];
            if (b == cplx(0)) continue;
            g.mode_of(q, k2.data());
            bool inside = true;
            for (int d = 0; d < dims; ++d) {
                ks[d] = k1[d] + k2[d];
                inside = inside && std::abs(ks[d]) <= no;
            }
            if (inside) out.data()[out.index(ks.data())] += a * b;
        }
    }
    return out;
}

TorusFunction derivative(const TorusFunction& f, int dir) {
    if (dir < 0 || dir > f.nu()) throw ShapeError("derivative direction out of range");
    TorusFunction r(f);
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < r.size(); ++i) {
        f.mode_of(i, k.data());
        r.data()[i] *= cplx(0.0, static_cast<double>(k[dir]));
    }
    r.set_real(f.is_real());
    return r;
}

TorusFunction omega_derivative(const TorusFunction& f, const std::vector<double>& omega) {
    if (static_cast<int>(omega.size()) != f.nu()) throw ShapeError("frequency vector length != nu");
    TorusFunction r(f);
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < r.size(); ++i) {
        f.mode_of(i, k.data());
        double w = 0;
        for (int d = 0; d < f.nu(); ++d) w += omega[d] * k[d];
        r.data()[i] *= cplx(0.0, w);
    }
    r.set_real(f.is_real());
    return r;
}

double mode_weight(const int* k, int nu) {
    int w = 1;
    for (int d = 0; d <= nu; ++d) w = std::max(w, std::abs(k[d]));
    return static_cast<double>(w);
}

double sobolev_norm(const TorusFunction& f, double s) {
    std::vector<int> k(f.dims());
    double acc = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double a = std::norm(f.data()[i]);
        if (a == 0.0) continue;
        f.mode_of(i, k.data());
        acc += std::pow(mode_weight(k.data(), f.nu()), 2 * s) * a;
    }
    return std::sqrt(acc);
}

TorusFunction reflect(const TorusFunction& f, bool flip_phi, bool flip_x) {
    TorusFunction r(f.nu(), f.cutoff(), f.is_real());
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        if (flip_phi)
            for (int d = 0; d < f.nu(); ++d) k[d] = -k[d];
        if (flip_x) k[f.nu()] = -k[f.nu()];
        r.data()[r.index(k.data())] = f.data()[i];
    }
    return r;
}

TorusFunction parity_project(const TorusFunction& f, ParityClass p) {
    TorusFunction r(f);
    auto apply = [&](Par par, bool phi) {
        if (par == Par::none) return;
        TorusFunction m = reflect(r, phi, !phi);
        const double s = par == Par::even ? 1.0 : -1.0;
        for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = 0.5 * (r.data()[i] + s * m.data()[i]);
    };
    apply(p.phi, true);
    apply(p.x, false);
    return r;
}

double parity_violation(const TorusFunction& f, ParityClass p) {
    return (f - parity_project(f, p)).max_abs();
}

TorusFunction apply_pointwise(const TorusFunction& f, const std::function<double(double)>& fn,
                              int m) {
    if (m == 0) m = 2 * default_grid(f.cutoff());
    GridValues g = synthesize(f, m);
    for (auto& x : g.v) x = fn(x.real());
    return analyze(g, f.cutoff(), true);
}

TorusFunction sample(int nu, int cutoff, const std::function<double(const double*)>& fn, int m) {
    if (m == 0) m = 2 * default_grid(cutoff);
    const int dims = nu + 1;
    GridValues g{nu, m, std::vector<cplx>(ipow(m, dims))};
    std::vector<double> th(dims);
    for (std::size_t i = 0; i < g.size(); ++i) {
        node_coords(i, dims, m, th.data());
        g.v[i] = fn(th.data());
    }
    return analyze(g, cutoff, true);
}

Evaluator::Evaluator(const TorusFunction& f)
    : f_(f), e_(f.dims(), std::vector<cplx>(f.side())), partial_(f.side()) {}

cplx Evaluator::value_grad(const double* theta, cplx* grad) const {
    const int nu = f_.nu(), n = f_.cutoff(), side = f_.side();
    for (int d = 0; d <= nu; ++d)
        for (int k = -n; k <= n; ++k) e_[d][k + n] = std::polar(1.0, k * theta[d]);
    const std::size_t rows = ipow(side, nu);
    cplx val(0);
    if (grad)
        for (int d = 0; d <= nu; ++d) grad[d] = 0.0;
    std::vector<int> li(nu);
    for (std::size_t r = 0; r < rows; ++r) {
        const cplx* src = &f_.data()[r * side];
        cplx s(0), sx(0);
        for (int j = 0; j < side; ++j) {
            const cplx t = src[j] * e_[nu][j];
            s += t;
            if (grad) sx += t * static_cast<double>(j - n);
        }
        if (s == cplx(0) && sx == cplx(0)) continue;
        std::size_t t2 = r;
        cplx fac(1.0);
        for (int d = nu - 1; d >= 0; --d) {
            li[d] = static_cast<int>(t2 % side);
            t2 /= side;
            fac *= e_[d][li[d]];
        }
        val += fac * s;
        if (grad) {
            grad[nu] += cplx(0, 1) * fac * sx;
            for (int d = 0; d < nu; ++d) grad[d] += cplx(0, li[d] - n) * fac * s;
        }
    }
    return val;
}

cplx Evaluator::value(const double* theta) const { return value_grad(theta, nullptr); }

double evaluate_real(const TorusFunction& f, const double* theta) {
    return Evaluator(f).value(theta).real();
}

int Displacement::cutoff() const {
    int n = 0;
    for (const auto& c : comp) n = std::max(n, c.cutoff());
    return n;
}

Displacement Displacement::zero(int nu, int cutoff) {
    Displacement p;
    p.comp.assign(nu + 1, TorusFunction(nu, cutoff, true));
    return p;
}

double wkinf_norm(const TorusFunction& f, int order, int m) {
    if (m == 0) m = default_grid(f.cutoff());
    const int dims = f.dims();
    double s = 0;
    std::vector<int> alpha(dims, 0);
    // all multi-indices with |alpha| <= order
    std::function<void(int, int)> walk = [&](int d, int left) {
        if (d == dims) {
            TorusFunction g = f;
            for (int a = 0; a < dims; ++a)
                for (int r = 0; r < alpha[a]; ++r) g = derivative(g, a);
            s = std::max(s, synthesize(g, m).sup());
            return;
        }
        for (int a = 0; a <= left; ++a) {
            alpha[d] = a;
            walk(d + 1, left - a);
        }
        alpha[d] = 0;
    };
    walk(0, order);
    return s;
}

double wkinf_norm(const Displacement& p, int order, int m) {
    double s = 0;
    for (const auto& c : p.comp) s = std::max(s, wkinf_norm(c, order, m));
    return s;
}

double w1inf_norm(const Displacement& p, int m) {
    if (m == 0) m = default_grid(p.cutoff());
    return wkinf_norm(p, 1, m);
}

TorusFunction compose_diffeo(const TorusFunction& h, const Displacement& p, int m) {
    const int nu = h.nu(), dims = h.dims();
    if (static_cast<int>(p.comp.size()) != dims) throw ShapeError("displacement has wrong arity");
    if (m == 0) m = 2 * default_grid(std::max(h.cutoff(), p.cutoff()));
    const double w = w1inf_norm(p, m);
    if (w > 0.5) throw NotDiffeoError("displacement W^{1,inf} size " + std::to_string(w) + " > 1/2");
    const std::size_t total = ipow(m, dims);
    GridValues out{nu, m, std::vector<cplx>(total)};
    std::vector<double> px = real_grid(p.comp[nu], m);
    if (angles_vanish(p)) {
        // displacement only along x: evaluate fibre by fibre
        std::vector<cplx> rows = angle_synthesis(h, m);
        const int n = h.cutoff(), side = h.side();
        std::vector<cplx> ex(side);
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t fibre = i / m;
            const double x = GridValues::node(static_cast<int>(i % m), m) + px[i];
            const cplx e1 = std::polar(1.0, x);
            cplx e = std::polar(1.0, -n * x), s(0);
            const cplx* r = &rows[fibre * side];
            for (int j = 0; j < side; ++j) {
                s += r[j] * e;
                e *= e1;
            }
            out.v[i] = s;
        }
    } else {
        std::vector<std::vector<double>> pg(dims);
        for (int d = 0; d < nu; ++d) pg[d] = real_grid(p.comp[d], m);
        pg[nu] = std::move(px);
        Evaluator ev(h);
        std::vector<double> th(dims);
        for (std::size_t i = 0; i < total; ++i) {
            node_coords(i, dims, m, th.data());
            for (int d = 0; d < dims; ++d) th[d] += pg[d][i];
            out.v[i] = ev.value(th.data());
        }
    }
    return analyze(out, h.cutoff(), h.is_real());
}

Displacement invert_diffeo(const Displacement& p, int m) {
    const int nu = p.nu(), dims = nu + 1, n = p.cutoff();
    if (m == 0) m = 2 * default_grid(n);
    const double w = w1inf_norm(p, m);
    if (w > 0.5) throw NotDiffeoError("displacement W^{1,inf} size " + std::to_string(w) + " > 1/2");
    const std::size_t total = ipow(m, dims);
    std::vector<GridValues> q(dims, GridValues{nu, m, std::vector<cplx>(total)});
    const int maxit = 50;
    const double tol = 1e-12;
    if (angles_vanish(p)) {
        TorusFunction px = p.comp[nu].resized(n);
        TorusFunction dpx = derivative(px, nu);
        std::vector<cplx> rows = angle_synthesis(px, m), drows = angle_synthesis(dpx, m);
        std::vector<double> pg = real_grid(px, m);
        const int side = px.side();
        auto eval = [&](const cplx* r, double x) {
            const cplx e1 = std::polar(1.0, x);
            cplx e = std::polar(1.0, -n * x), s(0);
            for (int j = 0; j < side; ++j) {
                s += r[j] * e;
                e *= e1;
            }
            return s.real();
        };
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t fibre = i / m;
            const double y = GridValues::node(static_cast<int>(i % m), m);
            double z = y - pg[i];
            bool done = false;
            for (int it = 0; it < maxit; ++it) {
                const double f = z + eval(&rows[fibre * side], z) - y;
                if (std::abs(f) <= tol) {
                    done = true;
                    break;
                }
                z -= f / (1.0 + eval(&drows[fibre * side], z));
            }
            if (!done) throw NotDiffeoError("inverse Newton did not converge at a grid node");
            q[nu].v[i] = z - y;
        }
    } else {
        std::vector<Evaluator> ev;
        for (const auto& c : p.comp) ev.emplace_back(c);
        std::vector<std::vector<double>> pg(dims);
        for (int d = 0; d < dims; ++d) pg[d] = real_grid(p.comp[d], m);
        std::vector<double> y(dims), z(dims);
        std::vector<cplx> grad(dims);
        Eigen::MatrixXd jac(dims, dims);
        Eigen::VectorXd res(dims);
        for (std::size_t i = 0; i < total; ++i) {
            node_coords(i, dims, m, y.data());
            for (int d = 0; d < dims; ++d) z[d] = y[d] - pg[d][i];
            bool done = false;
            for (int it = 0; it < maxit; ++it) {
                double err = 0;
                for (int a = 0; a < dims; ++a) {
                    const double pa = ev[a].value_grad(z.data(), grad.data()).real();
                    res(a) = z[a] + pa - y[a];
                    err = std::max(err, std::abs(res(a)));
                    for (int b = 0; b < dims; ++b) jac(a, b) = (a == b ? 1.0 : 0.0) + grad[b].real();
                }
                if (err <= tol) {
                    done = true;
                    break;
                }
                Eigen::VectorXd step = jac.partialPivLu().solve(res);
                for (int d = 0; d < dims; ++d) z[d] -= step(d);
            }
            if (!done) throw NotDiffeoError("inverse Newton did not converge at a grid node");
            for (int d = 0; d < dims; ++d) q[d].v[i] = z[d] - y[d];
        }
    }
    Displacement out;
    for (int d = 0; d < dims; ++d) out.comp.push_back(analyze(q[d], n, true));
    return out;
}

double roundtrip_error(const Displacement& p, const Displacement& q, int m) {
    const int nu = p.nu(), dims = nu + 1;
    if (m == 0) m = default_grid(std::max(p.cutoff(), q.cutoff()));
    const std::size_t total = ipow(m, dims);
    std::vector<std::vector<double>> qg(dims);
    for (int d = 0; d < dims; ++d) qg[d] = real_grid(q.comp[d], m);
    std::vector<Evaluator> ev;
    for (const auto& c : p.comp) ev.emplace_back(c);
    std::vector<double> w(dims);
    double err = 0;
    for (std::size_t i = 0; i < total; ++i) {
        node_coords(i, dims, m, w.data());
        for (int d = 0; d < dims; ++d) w[d] += qg[d][i];
        for (int d = 0; d < dims; ++d)
            err = std::max(err, std::abs(qg[d][i] + ev[d].value(w.data()).real()));
    }
    return err;
}

nlohmann::json to_json(const TorusFunction& f) {
    nlohmann::json j;
    j["nu"] = f.nu();
    j["cutoff"] = f.cutoff();
    j["real"] = f.is_real();
    auto modes = nlohmann::json::array();
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const cplx c = f.data()[i];
        if (std::abs(c) < 1e-16) continue;
        f.mode_of(i, k.data());
        modes.push_back({{"l", std::vector<int>(k.begin(), k.end() - 1)},
                         {"j", k.back()},
                         {"re", c.real()},
                         {"im", c.imag()}});
    }
    j["modes"] = modes;
    return j;
}

TorusFunction torus_from_json(const nlohmann::json& j) {
    TorusFunction f(j.at("nu").get<int>(), j.at("cutoff").get<int>(), j.value("real", true));
    for (const auto& m : j.at("modes")) {
        std::vector<int> l = m.at("l").get<std::vector<int>>();
        if (static_cast<int>(l.size()) != f.nu()) throw ShapeError("mode index has wrong length");
        std::vector<int> k(l);
        k.push_back(m.at("j").get<int>());
        for (int v : k)
            if (std::abs(v) > f.cutoff()) throw ShapeError("mode outside the cutoff");
        f.data()[f.index(k.data())] = cplx(m.at("re").get<double>(), m.value("im", 0.0));
    }
    return f;
}

}  // namespace qpred
