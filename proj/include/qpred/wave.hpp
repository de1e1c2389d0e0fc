#pragma once

#include <utility>
#include <vector>

#include "json.hpp"
#include "qpred/null_chart.hpp"

namespace qpred {

// d_t(A^-1 d_t psi) = d_x(A d_x psi) with A(t, x) = A(w t, x), psi(0) = f, psi_t(0) = g
struct WaveOptions {
    double s = default_s0;
    double T = 100.0;
    double dt = 0.005;
    int grid = 128;
    // spacing of stored snapshots in time; 0 stores every step
    double record_dt = 0.5;
};

struct EvolutionState {
    int grid = 0;
    double s = default_s0;
    double dt = 0;
    std::vector<double> times;
    // grid values at the snapshot times
    std::vector<std::vector<double>> psi, psi_t;
    // ||psi||_{s+1} + ||psi_t||_s per snapshot
    std::vector<double> norms;

    double sup_ratio() const;
};

// dt above 0.25 h min(A)/max(A) -> StabilityError; norm growth beyond 1e6 -> DivergedError
EvolutionState evolve_wave(const TorusFunction& A, const std::vector<double>& omega, const std::vector<double>& f,
                           const std::vector<double>& g, const WaveOptions& opt = {});

std::vector<double> sample_line(int grid, double (*fn)(double));
double line_sobolev_norm(const std::vector<double>& v, double s);
// (1/2) sum over the grid of (A pi^2 + A psi_x^2) h with pi = psi_t/A
double wave_energy(const std::vector<double>& psi, const std::vector<double>& psi_t, const std::vector<double>& A);

// roots of rho_+ rho_- W^2 - 2 (rho_+ - rho_-) k W - k^2 = 0, larger first
std::pair<double, double> dispersion_roots(double rho_plus, double rho_minus, double k);
double dispersion_residual(double rho_plus, double rho_minus, double k, double W);
// plane waves exp(i (W tau + k R)) of the metric the chart actually produces: W = k/rho_+ and -k/rho_-
std::pair<double, double> chart_dispersion_roots(double rho_plus, double rho_minus, double k);

struct AlmostPeriodicReport {
    // unexplained fraction of sum |psi|^2 over the samples
    double residual_fraction = 0;
    int kmax = 0;
    std::size_t samples = 0;
    std::size_t snapshots_used = 0;
};
// least squares fit of the snapshots, mapped through the chart, by exp(i (W_pm(k) tau + k R)), |k| <= kmax,
// plus the k = 0 pair {1, tau}
AlmostPeriodicReport almost_periodic_check(const EvolutionState& st, const NullChart& chart, int kmax = 12,
                                           std::size_t max_snapshots = 400);

nlohmann::json to_json(const AlmostPeriodicReport& r);

}  // namespace qpred
