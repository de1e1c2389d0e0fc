#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpred/diophantine.hpp"
#include "qpred/null_chart.hpp"
#include "qpred/psdo_reduce.hpp"

namespace qpverify {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Tolerances {
    double eikonal = 1e-9;
    double roundtrip = 1e-9;
    double metric = 1e-8;
    double parity = 1e-9;
    double residual = 1e-8;
    double manufactured = 1e-8;
    double identity = 1e-9;
    double order = -0.7;
    double patterns = 1e-12;
    double inverse = 1e-10;
    double sup_ratio = 10.0;
    double almost_periodic = 1e-4;
    double dispersion = 1e-12;
};

struct EvolveConfig {
    double T = 1000.0;
    double dt = 0.005;
    double record_dt = 0.5;
    double s = qpred::default_s0;
    int grid = 128;
    int kmax = 8;
    // rows (j, a, b) for a cos(j x) + b sin(j x)
    std::vector<std::array<double, 3>> f{{1.0, 1.0, 0.0}};
    std::vector<std::array<double, 3>> g;
};

struct ScanConfig {
    std::vector<double> lo{1.0}, hi{2.0};
    std::vector<double> gammas{0.2, 0.1, 0.05, 0.01};
    int samples = 10000;
    int cutoff = 20;
    double m = 1.0;
};

struct RunConfig {
    int nu = 1;
    int cutoff = 16;
    double gamma = 0.01;
    double iota = -1.0;
    std::vector<double> omega;
    double mass = 1.0;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    std::map<std::string, qpred::TorusFunction> coefficients;
    Tolerances tol;
    double chart_bound = qpred::chart_bound;
    double smallness = 0.1;
    double eta2 = qpred::default_eta2;
    qpred::OpLayout layout;
    int samples = 5;
    bool write_operators = false;
    EvolveConfig evolve;
    bool has_evolve = false;
    ScanConfig scan;
    bool has_scan = false;
    std::vector<std::string> stages;

    qpred::FrequencyVector frequency() const;
    bool has(const std::string& name) const { return coefficients.count(name) != 0; }
    // zero function when absent
    qpred::TorusFunction coeff(const std::string& name) const;
};

// base_dir resolves relative coefficient file paths
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".",
                       std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed = std::nullopt);

// real trigonometric polynomial with modes of sup-index <= band and amplitudes amp exp(-decay |k|)
qpred::TorusFunction random_torus(int nu, int cutoff, int band, double amp, double decay, std::mt19937_64& rng);

}  // namespace qpverify
