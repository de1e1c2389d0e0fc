#pragma once

#include <vector>

namespace qpred {

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double rms = 0;  // root mean square of the residuals
};

// least squares y ~ slope x + intercept
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// constant C in lhs <= C rhs: fitted on even-indexed samples, verified on odd ones with a margin
struct ConstantFit {
    double constant = 0;
    double worst_ratio = 0;  // max lhs/rhs over the verification half
    bool holds = false;
};
ConstantFit fit_constant(const std::vector<double>& lhs, const std::vector<double>& rhs, double margin = 2.0);

// (max - min)/max of positive samples
double relative_spread(const std::vector<double>& v);

}  // namespace qpred
