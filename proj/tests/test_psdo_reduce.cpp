#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "qpred/errors.hpp"
#include "qpred/psdo_reduce.hpp"
#include "support.hpp"

using namespace qpred;
using testsupport::random_function;

namespace {

TorusFunction sized(TorusFunction f, ParityClass p, double s0_size) {
    f = parity_project(f, p);
    f *= s0_size / sobolev_norm(f, default_s0);
    return f;
}

ReducedKG reduced(const TorusFunction& GR, const TorusFunction& G, double alpha, double mass) {
    ReducedKG r;
    r.stage = KGStage::time_removed;
    r.alpha = alpha;
    r.mass = mass;
    r.omega = golden_frequency().omega;
    r.GR = GR;
    r.G = G;
    r.Gtau = TorusFunction(GR.nu(), GR.cutoff());
    return r;
}

SymbolGrid constant_slices(const TorusFunction& f, int xi_max) {
    SymbolGrid s;
    s.xi_max = xi_max;
    for (int xi = -xi_max; xi <= xi_max; ++xi) s.slices.push_back(f);
    return s;
}

}  // namespace

TEST_CASE("layout indexing") {
    OpLayout lay{1, 2, 5};
    CHECK(lay.size() == 5 * 11);
    int k[2];
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k);
        CHECK(lay.index(k) == long(i));
        int nk[2] = {-k[0], -k[1]};
        CHECK(lay.index(nk) == long(lay.size() - 1 - i));
    }
    int out[2] = {3, 0};
    CHECK(lay.index(out) == -1);
}

TEST_CASE("D_m") {
    OpLayout lay{1, 1, 10};
    auto D = build_Dm(2.0, lay);
    auto Di = build_Dm(2.0, lay, true);
    int k[2];
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k);
        CHECK(std::abs(D.m(i, i) - std::sqrt(k[1] * k[1] + 2.0)) < 1e-14);
    }
    CHECK(inverse_residual(D, Di) < 1e-14);
    CHECK((D.m - D.m.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    CHECK_NOTHROW(build_Dm(0.0, lay));
    CHECK_THROWS_AS(build_Dm(0.0, lay, true), ZeroModeError);
}

TEST_CASE("multiplication operator matches pointwise products") {
    std::mt19937_64 rng(2);
    OpLayout lay{1, 3, 12};
    auto f = random_function(1, 2, 2, 1.0, 0.3, rng);
    auto g = random_function(1, 3, 3, 1.0, 0.3, rng);
    auto op = multiplication_op(f, lay);
    // vector of g's modes
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(lay.size());
    int k[2];
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k);
        if (std::abs(k[0]) <= 3 && std::abs(k[1]) <= 3) v(i) = g(k[0], k[1]);
    }
    Eigen::VectorXcd fv = op.m * v;
    double err = 0;
    for (std::size_t i = 0; i < lay.size(); ++i) {
        lay.mode(i, k);
        cplx direct = 0;
        for (int l = -2; l <= 2; ++l)
            for (int j = -2; j <= 2; ++j)
                if (std::abs(k[0] - l) <= 3 && std::abs(k[1] - j) <= 3) direct += f(l, j) * g(k[0] - l, k[1] - j);
        err = std::max(err, std::abs(fv(i) - direct));
    }
    CHECK(err < 1e-14);
}

TEST_CASE("first order system") {
    auto w = golden_frequency();
    OpLayout lay{1, 2, 24};

    SUBCASE("no lower order coefficients") {
        auto r = reduced(TorusFunction(1, 4), TorusFunction(1, 4), 1.1, 1.0);
        auto s = to_first_order(r, lay);
        CHECK(s.D0.m.cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.Dm1.m.cwiseAbs().maxCoeff() == 0.0);
        CHECK(fit_operator_order(s.D1).fitted_order == doctest::Approx(1.0).epsilon(0.02));
        CHECK(std::isinf(fit_operator_order(s.D0).fitted_order));
    }

    SUBCASE("orders of the coefficient blocks") {
        std::mt19937_64 rng(4);
        auto GR = sized(random_function(1, 3, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.02);
        auto G = sized(random_function(1, 3, 2, 1.0, 0.3, rng), {Par::even, Par::even}, 0.02);
        auto s = to_first_order(reduced(GR, G, 1.05, 1.0), lay);
        auto o0 = fit_operator_order(s.D0).fitted_order;
        auto om1 = fit_operator_order(s.Dm1).fitted_order;
        CHECK(o0 > -0.3);
        CHECK(o0 < 0.3);
        CHECK(om1 < -0.7);
        CHECK(operator_patterns(s.generator(), true).max() < 1e-14);
    }

    SUBCASE("stage and mass preconditions") {
        auto r = reduced(TorusFunction(1, 4), TorusFunction(1, 4), 1.0, 1.0);
        r.stage = KGStage::geometric;
        CHECK_THROWS_AS(to_first_order(r, lay), ShapeError);
        r.stage = KGStage::time_removed;
        r.mass = 0;
        CHECK_THROWS_AS(to_first_order(r, lay), ZeroModeError);
    }
    (void)w;
}

TEST_CASE("first order evolution reproduces the second order equation") {
    // x-only coefficients: the phase directions decouple and one phase mode suffices
    OpLayout lay{1, 0, 16};
    const double alpha = 1.2, mass = 0.7, tau = 0.8;
    TorusFunction GR(1, 3), G(1, 3);
    GR(0, 1) = cplx(0, -0.03);
    GR(0, -1) = cplx(0, 0.03);
    G(0, 2) = G(0, -2) = 0.02;
    auto s = to_first_order(reduced(GR, G, alpha, mass), lay);

    const auto n = static_cast<Eigen::Index>(lay.size());
    const auto D = build_Dm(mass, lay), Di = build_Dm(mass, lay, true);
    const auto dx = fourier_multiplier(lay, [](int j) { return cplx(0, j); });
    // alpha^2 phi'' = -(D^2 + G^R d_x + G) phi
    Eigen::MatrixXcd A = D.m * D.m + multiplication_op(GR, lay).m * dx.m + multiplication_op(G, lay).m;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    Y.topRightCorner(n, n).setIdentity();
    Y.bottomLeftCorner(n, n) = -A / (alpha * alpha);
    Eigen::MatrixXcd prop2 = (tau * Y).exp();
    Eigen::MatrixXcd prop1 = (tau * s.generator().m).exp();

    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd phi(n), dphi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        phi(i) = cplx(nd(rng), nd(rng)) * std::exp(-0.3 * std::abs(double(i - n / 2)));
        dphi(i) = cplx(nd(rng), nd(rng)) * std::exp(-0.3 * std::abs(double(i - n / 2)));
    }
    const cplx ia(0, alpha);
    auto to_u = [&](const Eigen::VectorXcd& p, const Eigen::VectorXcd& dp) {
        Eigen::VectorXcd u(2 * n);
        u.head(n) = (D.m * p - ia * dp) / std::sqrt(2.0);
        u.tail(n) = (D.m * p + ia * dp) / std::sqrt(2.0);
        return u;
    };
    Eigen::VectorXcd y0(2 * n);
    y0 << phi, dphi;
    Eigen::VectorXcd y1 = prop2 * y0;
    Eigen::VectorXcd expect = to_u(y1.head(n), y1.tail(n));
    Eigen::VectorXcd got = prop1 * to_u(phi, dphi);
    CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-8);
    (void)Di;
}

TEST_CASE("V transform") {
    OpLayout lay{1, 2, 24};

    SUBCASE("identity without G^R") {
        auto v = vee_transform(TorusFunction(1, 4), 1.0, 1.0, lay);
        CHECK((v.V.m - OperatorMatrix::identity(lay, 2).m).cwiseAbs().maxCoeff() == 0.0);
        CHECK(v.inverse_residual == 0.0);
    }

    SUBCASE("inverse and order") {
        std::mt19937_64 rng(6);
        auto GR = sized(random_function(1, 3, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.03);
        auto v = vee_transform(GR, 1.0, 1.0, lay);
        CHECK(v.inverse_residual < 1e-10);
        CHECK(v.neumann_terms > 1);
        CHECK(fit_operator_order(v.V - OperatorMatrix::identity(lay, 2)).fitted_order < -0.7);
        CHECK(operator_patterns(v.V).max() < 1e-14);
    }

    SUBCASE("smallness guard") {
        std::mt19937_64 rng(7);
        auto GR = sized(random_function(1, 3, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.2);
        CHECK_THROWS_AS(vee_transform(GR, 1.0, 1.0, lay), SmallnessError);
    }
}

TEST_CASE("symbol equation") {
    auto w = golden_frequency();
    const double alpha = 1.1, mass = 1.0;

    SUBCASE("zero right hand side") {
        auto sol = solve_symbol_d(h_symbol(TorusFunction(1, 4), mass, 10), w, alpha, mass);
        CHECK(sol.d.sup() == 0.0);
        CHECK(sol.residual_sup == 0.0);
        CHECK(sol.d.flagged.empty());
    }

    SUBCASE("single phase mode") {
        const double eps = 0.02;
        TorusFunction GR(1, 4);
        GR(1, 0) = GR(-1, 0) = eps / 2;
        auto sol = solve_symbol_d(h_symbol(GR, mass, 12), w, alpha, mass);
        const double om = w.omega[0];
        double err = 0;
        for (int xi = -12; xi <= 12; ++xi) {
            const double c = xi / std::sqrt(xi * xi + mass);
            // d = -(c eps/(2 alpha om)) sin phi
            err = std::max(err, std::abs(sol.d.at(xi)(1, 0) - cplx(0, c * eps / (4 * alpha * om))));
            err = std::max(err, std::abs(sol.d.at(xi)(-1, 0) - cplx(0, -c * eps / (4 * alpha * om))));
        }
        CHECK(err < 1e-15);
        CHECK(sol.residual_sup < 1e-15);
    }

    SUBCASE("general data leaves only unreachable modes") {
        std::mt19937_64 rng(10);
        auto GR = sized(random_function(1, 4, 3, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.02);
        auto sol = solve_symbol_d(h_symbol(GR, mass, 24), w, alpha, mass);
        CHECK(sol.d.flagged.empty());
        // odd in x: no l = 0, j = 0 mode, so the residual vanishes away from xi = 0
        double away = 0;
        for (int xi = 1; xi <= 24; ++xi)
            away = std::max({away, sol.residual.at(xi).max_abs(), sol.residual.at(-xi).max_abs()});
        CHECK(away < 1e-14);
        CHECK(fit_symbol_order(sol.d).fitted_order == doctest::Approx(0.0).epsilon(0.05));
    }
}

TEST_CASE("exponential conjugation") {
    OpLayout lay{1, 2, 24};
    auto w = golden_frequency();
    const double alpha = 1.0, mass = 1.0;
    const auto lam = phase_derivative_op(lay, w.omega);
    const auto target = lam - cplx(0, 1 / alpha) * build_Dm(mass, lay);

    SUBCASE("Fourier multiplier commutes") {
        SymbolGrid d;
        d.xi_max = lay.N;
        for (int xi = -lay.N; xi <= lay.N; ++xi) d.slices.push_back(TorusFunction::constant(1, 2, 0.1 / (1 + xi * xi)));
        auto c = exp_conjugate(d, target, target);
        CHECK(c.remainder.m.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(inverse_residual(c.M, c.M_inv) < 1e-13);
    }

    SUBCASE("commutator with D gains one order") {
        TorusFunction f(1, 2);
        f(0, 1) = f(0, -1) = 0.05;
        f(1, 1) = f(-1, -1) = 0.02;
        auto c = exp_conjugate(constant_slices(f, lay.N), target, target);
        CHECK(c.order.fitted_order < 0.2);
        CHECK(c.order.fitted_order > -0.3);
    }

    SUBCASE("size guard") {
        auto c = constant_slices(TorusFunction::constant(1, 2, 1.5), lay.N);
        CHECK_THROWS_AS(symbol_exp(c, lay), SmallnessError);
    }
}

TEST_CASE("full reduction to order -1") {
    auto w = golden_frequency();
    std::mt19937_64 rng(12);
    auto GR = sized(random_function(1, 4, 2, 1.0, 0.3, rng), {Par::even, Par::odd}, 0.02);
    auto G = sized(random_function(1, 4, 2, 1.0, 0.3, rng), {Par::even, Par::even}, 0.02);
    auto r = reduced(GR, G, 1.03, 1.0);
    OpLayout lay;
    auto p = psdo_pipeline(r, w, lay);

    CHECK(p.order_d0.fitted_order > -0.3);
    CHECK(p.order_dm1.fitted_order < -0.7);
    CHECK(p.transform.order_original.fitted_order > -0.3);
    CHECK(p.conj.order.fitted_order < -0.7);
    CHECK(p.transform.order.fitted_order < -0.7);
    CHECK(p.transform.patterns.max() < 1e-12);
    CHECK(p.transform.inverse_residual < 1e-10);
    CHECK(operator_patterns(p.transform.remainder, true).max() < 1e-12);

    auto j = to_json(p);
    CHECK(j.contains("remainder_order"));
    CHECK(j["flagged_xi"].is_array());

    const auto dir = std::filesystem::temp_directory_path() / "qpred_psdo_csv";
    std::filesystem::create_directories(dir);
    write_operator_csv(p.transform.remainder, (dir / "rem.csv").string());
    for (const char* b : {"rem_11.csv", "rem_12.csv", "rem_21.csv", "rem_22.csv"}) {
        std::ifstream in(dir / b);
        std::string header;
        std::getline(in, header);
        CHECK(header == "row_l,row_j,col_l,col_j,re,im");
    }
    std::filesystem::remove_all(dir);
}
