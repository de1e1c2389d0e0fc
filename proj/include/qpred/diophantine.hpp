#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "qpred/torus.hpp"

namespace qpred {

struct FrequencyVector {
    std::vector<double> omega;
    double gamma = 0.01;
    double iota = 4.0;

    FrequencyVector() = default;
    // iota < 0 picks nu + 3
    FrequencyVector(std::vector<double> w, double g, double iota = -1.0);

    int nu() const { return static_cast<int>(omega.size()); }
    double dot(const int* l) const;
};

FrequencyVector golden_frequency(double gamma = 0.01);

struct DiophReport {
    bool passed = true;
    std::vector<int> worst_l;
    int worst_j = 0;
    // |w.l + m j| <l,j>^iota / (2 gamma)
    double worst_ratio = 0;
    int scan_cutoff = 0;
};

DiophReport check_diophantine(const FrequencyVector& w, double m, int mode_cutoff);

// smallest |w.l + m j| <l,j>^iota over 0 < max(|l|,|j|) <= cutoff
double min_scaled_divisor(const std::vector<double>& omega, double m, double iota, int cutoff);

constexpr double resonance_tol = 1e-14;
constexpr double mean_tol = 1e-10;

// w.d_phi f + m d_x f
TorusFunction transport_apply(const TorusFunction& f, const FrequencyVector& w, double m);
// zero-mean solution of w.d_phi f + m d_x f = g
TorusFunction invert_transport(const TorusFunction& g, const FrequencyVector& w, double m);
// solution of w.d_phi f = g with no l = 0 modes; g must have none either
TorusFunction invert_phase_derivative(const TorusFunction& g, const FrequencyVector& w);

struct MeasureRow {
    double gamma;
    double fraction_excluded;
    int samples;
    int cutoff;
    // binomial standard error of the fraction
    double std_error;
};

std::vector<MeasureRow> measure_complement(const std::vector<double>& lo, const std::vector<double>& hi,
                                           const std::function<double(const std::vector<double>&)>& m_of,
                                           const std::vector<double>& gammas, int samples, int cutoff,
                                           double iota = -1.0);

void write_measure_csv(std::ostream& os, const std::vector<MeasureRow>& rows);

}  // namespace qpred
