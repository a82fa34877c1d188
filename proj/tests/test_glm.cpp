#include <cmath>

#include "doctest.h"
#include "longconf/error.hpp"
#include "longconf/glm.hpp"
#include "longconf/random.hpp"

using namespace longconf;

namespace {

DesignMatrix intercept_only(Eigen::Index n) {
    return DesignMatrix({"(Intercept)"}, Eigen::MatrixXd::Ones(n, 1));
}

struct LogisticData {
    DesignMatrix X;
    std::vector<double> y;
};

// logit^-1(1 + 0.5 x - 0.5 u) with x, u ~ Bernoulli(0.5)
LogisticData logistic_data(std::size_t n, std::uint64_t seed) {
    auto rs = derive_stream(SeedSpec{seed, {}}, "glm", 0);
    Eigen::MatrixXd M(static_cast<Eigen::Index>(n), 3);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rs.bernoulli(0.5), u = rs.bernoulli(0.5);
        const auto r = static_cast<Eigen::Index>(i);
        M(r, 0) = 1.0;
        M(r, 1) = x;
        M(r, 2) = u;
        y[i] = rs.bernoulli(inv_logit(1.0 + 0.5 * x - 0.5 * u)) ? 1.0 : 0.0;
    }
    return {DesignMatrix({"(Intercept)", "x", "u"}, M), y};
}

}  // namespace

TEST_CASE("fit_logistic intercept-only with half ones") {
    std::vector<double> y{1, 0, 1, 0, 1, 0};
    auto fit = fit_logistic(intercept_only(6), y);
    CHECK(fit.converged);
    CHECK(std::abs(fit.coefficients[0]) < 1e-8);
}

TEST_CASE("fit_logistic recovers the generating coefficients") {
    auto d = logistic_data(200000, 5);
    auto fit = fit_logistic(d.X, d.y);
    CHECK(fit.converged);
    const double truth[] = {1.0, 0.5, -0.5};
    for (int k = 0; k < 3; ++k) {
        const double se = std::sqrt(fit.covariance(k, k));
        CHECK(std::abs(fit.coefficients[k] - truth[k]) < 3 * se);
    }
}

TEST_CASE("fit_logistic score vanishes and matches finite differences") {
    auto d = logistic_data(5000, 9);
    std::vector<double> w(d.y.size(), 1.0);
    auto fit = fit_logistic(d.X, d.y, w);
    const auto score = logistic_score(d.X.values, d.y, w, fit.coefficients);
    CHECK(score.cwiseAbs().maxCoeff() < 1e-8);

    auto rs = derive_stream(SeedSpec{2, {}}, "fd", 0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd b(3);
        for (int k = 0; k < 3; ++k) b[k] = rs.normal();
        const auto analytic = logistic_score(d.X.values, d.y, w, b);
        for (int k = 0; k < 3; ++k) {
            const double h = 1e-5;
            Eigen::VectorXd bp = b, bm = b;
            bp[k] += h;
            bm[k] -= h;
            const double fd = (logistic_log_likelihood(d.X.values, d.y, w, bp) -
                               logistic_log_likelihood(d.X.values, d.y, w, bm)) /
                              (2 * h);
            CHECK(std::abs(fd - analytic[k]) <= 1e-5 * std::max(1.0, std::abs(analytic[k])));
        }
    }
}

TEST_CASE("fit_logistic log-likelihood is non-decreasing across iterations") {
    auto d = logistic_data(3000, 21);
    auto fit = fit_logistic(d.X, d.y);
    REQUIRE(fit.trace.size() >= 2);
    for (std::size_t k = 1; k < fit.trace.size(); ++k) CHECK(fit.trace[k] >= fit.trace[k - 1]);
}

TEST_CASE("fit_logistic detects separation") {
    Eigen::MatrixXd M(8, 2);
    std::vector<double> y;
    for (int i = 0; i < 8; ++i) {
        M(i, 0) = 1.0;
        M(i, 1) = i < 4 ? 0.0 : 1.0;
        y.push_back(i < 4 ? 0.0 : 1.0);
    }
    try {
        fit_logistic(DesignMatrix({"(Intercept)", "x"}, M), y);
        FAIL("expected separation error");
    } catch (const FitError& e) {
        CHECK(std::string(e.what()).find("separation") != std::string::npos);
    }
}

TEST_CASE("fit_logistic rejects a rank-deficient design") {
    Eigen::MatrixXd M(6, 3);
    std::vector<double> y{0, 1, 0, 1, 1, 0};
    for (int i = 0; i < 6; ++i) {
        M(i, 0) = 1.0;
        M(i, 1) = i % 2;
        M(i, 2) = 2.0 * (i % 2);
    }
    CHECK_THROWS_AS(fit_logistic(DesignMatrix({"(Intercept)", "x", "x2"}, M), y), FitError);
}

TEST_CASE("fit_linear exact fit") {
    Eigen::MatrixXd M(5, 2);
    std::vector<double> y;
    for (int i = 0; i < 5; ++i) {
        M(i, 0) = 1.0;
        M(i, 1) = i;
        y.push_back(3.0 - 2.0 * i);
    }
    auto fit = fit_linear(DesignMatrix({"(Intercept)", "t"}, M), y);
    CHECK(fit.coefficients[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fit.coefficients[1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(fit.residual_sd < 1e-12);
}

TEST_CASE("fit_linear duplicated rows at half weight match the original") {
    auto rs = derive_stream(SeedSpec{4, {}}, "lin", 0);
    const int n = 50;
    Eigen::MatrixXd M(n, 3), M2(2 * n, 3);
    std::vector<double> y, y2, w2;
    for (int i = 0; i < n; ++i) {
        M.row(i) << 1.0, rs.normal(), rs.bernoulli(0.4);
        y.push_back(1.0 + M(i, 1) - 2 * M(i, 2) + rs.normal());
        for (int r = 0; r < 2; ++r) {
            M2.row(2 * i + r) = M.row(i);
            y2.push_back(y.back());
            w2.push_back(0.5);
        }
    }
    auto a = fit_linear(DesignMatrix({"c", "x", "z"}, M), y);
    auto b = fit_linear(DesignMatrix({"c", "x", "z"}, M2), y2, w2);
    for (int k = 0; k < 3; ++k) CHECK(a.coefficients[k] == doctest::Approx(b.coefficients[k]).epsilon(1e-12));
}

TEST_CASE("fit_linear equals the normal-equation solution") {
    auto rs = derive_stream(SeedSpec{8, {}}, "ne", 0);
    const int n = 400;
    Eigen::MatrixXd M(n, 4);
    std::vector<double> y, w;
    for (int i = 0; i < n; ++i) {
        M.row(i) << 1.0, rs.normal(), rs.uniform(), rs.bernoulli(0.5);
        y.push_back(rs.normal(2.0, 1.0) + M(i, 1));
        w.push_back(rs.exponential());
    }
    auto fit = fit_linear(DesignMatrix({"a", "b", "c", "d"}, M), y, w);
    Eigen::VectorXd ye = Eigen::Map<Eigen::VectorXd>(y.data(), n);
    Eigen::VectorXd we = Eigen::Map<Eigen::VectorXd>(w.data(), n);
    const Eigen::MatrixXd XtWX = M.transpose() * we.asDiagonal() * M;
    const Eigen::VectorXd XtWy = M.transpose() * we.asDiagonal() * ye;
    const Eigen::VectorXd ne = XtWX.llt().solve(XtWy);
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(fit.coefficients[k] - ne[k]) <= 1e-10 * std::max(1.0, std::abs(ne[k])));
    }
}

TEST_CASE("fit_linear errors") {
    Eigen::MatrixXd M(4, 2);
    M << 1, 1, 1, 1, 1, 1, 1, 1;
    std::vector<double> y{1, 2, 3, 4};
    CHECK_THROWS_AS(fit_linear(DesignMatrix({"a", "b"}, M), y), FitError);
    Eigen::MatrixXd M2(2, 2);
    M2 << 1, 0, 1, 1;
    std::vector<double> y2{1, 2};
    CHECK_THROWS_AS(fit_linear(DesignMatrix({"a", "b"}, M2), y2), FitError);
    CHECK_THROWS_AS(fit_linear(DesignMatrix({"a", "a"}, M), y), InvalidInput);
}

TEST_CASE("predict_prob") {
    GlmFit fit;
    fit.names = {"(Intercept)", "x", "u"};
    fit.coefficients = Eigen::Vector3d(0, 0, 0);
    Eigen::MatrixXd rows(2, 3);
    rows << 1, 0, 0, 1, 1, 1;
    DesignMatrix X(fit.names, rows);
    auto p = predict_prob(fit, X);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);

    fit.coefficients = Eigen::Vector3d(1, 0.5, -0.5);
    p = predict_prob(fit, X);
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(std::abs(p[0] - 0.731) < 1e-3);

    // Monotone in a positive-coefficient regressor.
    Eigen::MatrixXd grid(20, 3);
    for (int i = 0; i < 20; ++i) grid.row(i) << 1, -5 + 0.5 * i, 0;
    auto pg = predict_prob(fit, DesignMatrix(fit.names, grid));
    for (int i = 1; i < 20; ++i) CHECK(pg[i] >= pg[i - 1]);

    CHECK_THROWS_AS(predict_prob(fit, DesignMatrix({"a", "b", "c"}, rows)), InvalidInput);
}
