#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "qpred/torus.hpp"

namespace testsupport {

inline const double golden = (1.0 + std::sqrt(5.0)) / 2.0;

// real trigonometric polynomial with modes |k| <= band, amplitudes decaying like exp(-decay |k|)
inline qpred::TorusFunction random_function(int nu, int cutoff, int band, double amp, double decay,
                                            std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    qpred::TorusFunction f(nu, cutoff, false);
    std::vector<int> k(nu + 1);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mode_of(i, k.data());
        int w = 0;
        for (int v : k) w = std::max(w, std::abs(v));
        if (w > band) continue;
        f.data()[i] = amp * std::exp(-decay * w) * qpred::cplx(nd(rng), nd(rng));
    }
    f.enforce_real();
    return f;
}

inline qpred::TorusFunction zero_mean(qpred::TorusFunction f) {
    f.data()[f.size() / 2] = 0.0;
    return f;
}

// independent point evaluation: explicit double loop over modes with cos/sin
inline qpred::cplx direct_sum(const qpred::TorusFunction& f, double phi, double x) {
    qpred::cplx s(0);
    const int n = f.cutoff();
    for (int l = -n; l <= n; ++l)
        for (int j = -n; j <= n; ++j) {
            const double a = l * phi + j * x;
            s += f(l, j) * qpred::cplx(std::cos(a), std::sin(a));
        }
    return s;
}

}  // namespace testsupport
