#pragma once

#include "json.hpp"
#include "qpred/diophantine.hpp"
#include "qpred/errors.hpp"
#include "qpred/torus.hpp"

namespace qpred {

constexpr double default_s0 = 4.25;

struct StraighteningResult {
    TorusFunction beta;
    double m_inf = 1.0;
    double residual_s0 = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct NoConvergence : Error {
    NoConvergence(const std::string& what, StraighteningResult best) : Error(what), best(std::move(best)) {}
    StraighteningResult best;
};

struct StraightenOptions {
    double tol = 1e-10;
    int max_iter = 30;
    double s0 = default_s0;
    // gamma^-1 ||a0||_{s1} must not exceed this
    double smallness = 0.1;
    double s1 = default_s0 + 2 * 4.0 + 4;
    // corrections are kept on modes up to cutoff - band_margin
    int band_margin = 0;
    bool check_divisors = true;
};

// gamma^-1 ||a0||_{s1}
double smallness_delta(const TorusFunction& a0, const FrequencyVector& w, double s1);

// w.d_phi beta + (1 + a0)(1 + d_x beta) - m, exact on the modes of beta
TorusFunction straighten_residual(const TorusFunction& a0, const TorusFunction& beta, double m,
                                  const FrequencyVector& w);

StraighteningResult straighten_newton(const TorusFunction& a0, const FrequencyVector& w,
                                      const StraightenOptions& opt = {},
                                      const TorusFunction* beta0 = nullptr);

StraighteningResult straighten_collocation(const TorusFunction& a0, const FrequencyVector& w,
                                           double s0 = default_s0);

struct PushforwardReport {
    // ||w.d_phi beta + (1+a0)(1+d_x beta) - m||_{s0}
    double residual = 0;
    // same residual after composition with the inverse lift, i.e. the x-coefficient of the pushed field minus m
    double composed = 0;
};

PushforwardReport pushforward_check(const TorusFunction& a0, const TorusFunction& beta, double m,
                                    const FrequencyVector& w, double s0 = default_s0);

nlohmann::json to_json(const StraighteningResult& r);

}  // namespace qpred
