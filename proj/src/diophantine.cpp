#include "qpred/diophantine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <boost/random/sobol.hpp>
#include <boost/random/uniform_01.hpp>

#include "qpred/errors.hpp"

namespace qpred {

namespace {

std::string mode_string(const int* k, int dims) {
    std::ostringstream os;
    os << "(";
    for (int d = 0; d < dims; ++d) os << (d ? "," : "") << k[d];
    os << ")";
    return os.str();
}

// visits every mode with 0 < max(|l|,|j|) <= cutoff
template <class F>
void for_each_mode(int nu, int cutoff, F&& fn) {
    const int dims = nu + 1, side = 2 * cutoff + 1;
    std::vector<int> k(dims, -cutoff);
    std::size_t total = 1;
    for (int d = 0; d < dims; ++d) total *= side;
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t t = i;
        bool zero = true;
        for (int d = dims - 1; d >= 0; --d) {
            k[d] = static_cast<int>(t % side) - cutoff;
            t /= side;
            zero = zero && k[d] == 0;
        }
        if (!zero) fn(k.data());
    }
}

}  // namespace

FrequencyVector::FrequencyVector(std::vector<double> w, double g, double io)
    : omega(std::move(w)), gamma(g), iota(io < 0 ? static_cast<double>(omega.size()) + 3.0 : io) {}

double FrequencyVector::dot(const int* l) const {
    double s = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) s += omega[i] * l[i];
    return s;
}

FrequencyVector golden_frequency(double gamma) {
    return FrequencyVector({(1.0 + std::sqrt(5.0)) / 2.0}, gamma);
}

DiophReport check_diophantine(const FrequencyVector& w, double m, int mode_cutoff) {
    const int nu = w.nu();
    DiophReport rep;
    rep.scan_cutoff = mode_cutoff;
    rep.worst_ratio = std::numeric_limits<double>::infinity();
    for_each_mode(nu, mode_cutoff, [&](const int* k) {
        const double div = std::abs(w.dot(k) + m * k[nu]);
        const double r = div * std::pow(mode_weight(k, nu), w.iota) / (2.0 * w.gamma);
        if (r < rep.worst_ratio) {
            rep.worst_ratio = r;
            rep.worst_l.assign(k, k + nu);
            rep.worst_j = k[nu];
        }
    });
    rep.passed = rep.worst_ratio > 1.0;
    return rep;
}

double min_scaled_divisor(const std::vector<double>& omega, double m, double iota, int cutoff) {
    const int nu = static_cast<int>(omega.size());
    double best = std::numeric_limits<double>::infinity();
    for_each_mode(nu, cutoff, [&](const int* k) {
        double s = m * k[nu];
        for (int i = 0; i < nu; ++i) s += omega[i] * k[i];
        best = std::min(best, std::abs(s) * std::pow(mode_weight(k, nu), iota));
    });
    return best;
}

TorusFunction transport_apply(const TorusFunction& f, const FrequencyVector& w, double m) {
    if (w.nu() != f.nu()) throw ShapeError("frequency vector length differs from nu");
    TorusFunction out = f;
    std::vector<int> k(f.dims());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        out.data()[i] *= cplx(0, w.dot(k.data()) + m * k[f.nu()]);
    }
    return out;
}

TorusFunction invert_transport(const TorusFunction& g, const FrequencyVector& w, double m) {
    if (w.nu() != g.nu()) throw ShapeError("frequency vector length differs from nu");
    if (std::abs(g.mean()) > mean_tol)
        throw MeanError("transport right-hand side has mean " + std::to_string(std::abs(g.mean())));
    TorusFunction f(g.nu(), g.cutoff(), g.is_real());
    std::vector<int> k(g.dims());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.mode_of(i, k.data());
        const cplx c = g.data()[i];
        if (c == cplx(0)) continue;
        bool zero = true;
        for (int v : k) zero = zero && v == 0;
        if (zero) continue;
        const double div = w.dot(k.data()) + m * k[g.nu()];
        if (std::abs(div) < resonance_tol)
            throw SmallDivisorError("resonant transport divisor", mode_string(k.data(), g.dims()), div);
        f.data()[i] = c / cplx(0, div);
    }
    return f;
}

TorusFunction invert_phase_derivative(const TorusFunction& g, const FrequencyVector& w) {
    if (w.nu() != g.nu()) throw ShapeError("frequency vector length differs from nu");
    TorusFunction f(g.nu(), g.cutoff(), g.is_real());
    std::vector<int> k(g.dims());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.mode_of(i, k.data());
        const cplx c = g.data()[i];
        const double div = w.dot(k.data());
        bool l0 = true;
        for (int d = 0; d < g.nu(); ++d) l0 = l0 && k[d] == 0;
        if (l0) {
            if (std::abs(c) > mean_tol)
                throw MeanError("phase derivative right-hand side has a nonzero phi-average");
            continue;
        }
        if (std::abs(div) < resonance_tol)
            throw SmallDivisorError("resonant phase divisor", mode_string(k.data(), g.dims()), div);
        f.data()[i] = c / cplx(0, div);
    }
    return f;
}

std::vector<MeasureRow> measure_complement(const std::vector<double>& lo, const std::vector<double>& hi,
                                           const std::function<double(const std::vector<double>&)>& m_of,
                                           const std::vector<double>& gammas, int samples, int cutoff,
                                           double iota) {
    const int nu = static_cast<int>(lo.size());
    if (static_cast<int>(hi.size()) != nu || nu < 1) throw ShapeError("frequency box has wrong dimension");
    if (samples < 1) throw ShapeError("need at least one sample");
    if (iota < 0) iota = nu + 3.0;
    boost::random::sobol gen(nu);
    boost::random::uniform_01<double> u01;
    // raw sobol points are dyadic rationals, which sit exactly on resonances
    std::vector<double> shift(nu);
    for (int d = 0; d < nu; ++d) shift[d] = std::fmod(std::sqrt(2.0 + d) * (d + 1), 1.0);
    // per sample the smallest scaled divisor; a sample is excluded at gamma iff it is <= 2 gamma
    std::vector<double> minima(samples);
    std::vector<double> omega(nu);
    for (int s = 0; s < samples; ++s) {
        for (int d = 0; d < nu; ++d) omega[d] = lo[d] + (hi[d] - lo[d]) * std::fmod(u01(gen) + shift[d], 1.0);
        minima[s] = min_scaled_divisor(omega, m_of(omega), iota, cutoff);
    }
    std::vector<MeasureRow> rows;
    for (double g : gammas) {
        int bad = 0;
        for (double v : minima)
            if (g > 0 ? v <= 2.0 * g : v == 0.0) ++bad;
        const double p = static_cast<double>(bad) / samples;
        rows.push_back({g, p, samples, cutoff, std::sqrt(p * (1 - p) / samples)});
    }
    return rows;
}

void write_measure_csv(std::ostream& os, const std::vector<MeasureRow>& rows) {
    os << "gamma,fraction_excluded,samples,cutoff\n";
    os << std::setprecision(10);
    for (const auto& r : rows) os << r.gamma << ',' << r.fraction_excluded << ',' << r.samples << ',' << r.cutoff << '\n';
}

}  // namespace qpred
