#include "qpred/fitting.hpp"

#include <algorithm>
#include <cmath>

#include "qpred/errors.hpp"

namespace qpred {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ShapeError("line fit needs two or more paired samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0) throw ShapeError("line fit with constant abscissa");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.slope * x[i] + f.intercept);
        ss += r * r;
    }
    f.rms = std::sqrt(ss / n);
    return f;
}

ConstantFit fit_constant(const std::vector<double>& lhs, const std::vector<double>& rhs, double margin) {
    if (lhs.size() != rhs.size() || lhs.size() < 2) throw ShapeError("constant fit needs two or more samples");
    auto ratio = [&](std::size_t i) {
        if (rhs[i] > 0) return lhs[i] / rhs[i];
        return lhs[i] == 0 ? 0.0 : HUGE_VAL;
    };
    ConstantFit f;
    for (std::size_t i = 0; i < lhs.size(); i += 2) f.constant = std::max(f.constant, ratio(i));
    for (std::size_t i = 1; i < lhs.size(); i += 2) f.worst_ratio = std::max(f.worst_ratio, ratio(i));
    f.holds = std::isfinite(f.constant) && f.worst_ratio <= margin * f.constant;
    return f;
}

double relative_spread(const std::vector<double>& v) {
    if (v.empty()) return 0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi > 0 ? (*hi - *lo) / *hi : 0.0;
}

}  // namespace qpred
