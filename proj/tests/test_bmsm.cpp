#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "longconf/bmsm.hpp"
#include "longconf/dgp.hpp"
#include "longconf/error.hpp"

using namespace longconf;

namespace {

LongitudinalDataset draw(std::size_t n, std::uint64_t seed) {
    RandomStream rs(seed);
    return simulate(ScenarioSpec::defaults(Scenario::TvBinaryU, n), rs).without_latent();
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST_CASE("dirichlet draws lie on the simplex") {
    RandomStream rs(1);
    const auto one = draw_dirichlet(1, rs);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 1.0);
    for (std::size_t n : {2, 7, 500, 20000}) {
        const auto p = draw_dirichlet(n, rs);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
        CHECK(*std::min_element(p.begin(), p.end()) >= 0.0);
    }
    CHECK_THROWS_AS(draw_dirichlet(0, rs), InvalidInput);
}

TEST_CASE("dirichlet moments") {
    const std::size_t n = 100000;
    RandomStream rs(2);
    const auto p = draw_dirichlet(n, rs);
    const double nd = static_cast<double>(n);
    CHECK(mean_of(p) == doctest::Approx(1.0 / nd).epsilon(1e-12));
    double ss = 0.0, m4 = 0.0;
    for (double v : p) {
        const double d = v - 1.0 / nd;
        ss += d * d;
        m4 += d * d * d * d;
    }
    const double var = ss / nd;
    const double theory = (nd - 1.0) / (nd * nd * (nd + 1.0));
    const double se = std::sqrt((m4 / nd - var * var) / nd);
    INFO("var ", var, " theory ", theory, " se ", se);
    CHECK(std::abs(var - theory) < 5.0 * se);
}

TEST_CASE("quantile interpolates like type 7") {
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({5}, 0.975) == 5);
    CHECK(quantile({0, 10}, 0.025) == doctest::Approx(0.25));
    CHECK(quantile({3, 1, 2}, 1.0) == 3);
    CHECK_THROWS_AS(quantile({}, 0.5), InvalidInput);
}

TEST_CASE("point estimate equals the frequentist fit under unit weights") {
    const auto d = draw(500, 3);
    std::vector<double> ones(d.n(), 1.0);
    const WeightVector w{ones, true, {}};
    BmsmConfig cfg;
    cfg.B = 1;
    const auto post = fit_bmsm(d, d.outcomes(), w, cfg, RandomStream(1));
    MsmConfig mc;
    mc.bootstrap = 0;
    const auto freq = fit_msm(d, d.outcomes(), w, mc, RandomStream(1));
    CHECK(post.point == freq.ate);
    CHECK(post.ate_draws.size() == 1);
    CHECK(post.ci95.first <= post.ci95.second);
}

TEST_CASE("each draw is the pi-times-w weighted least-squares solution") {
    const auto d = draw(400, 4);
    const auto w = compute_weights(d, fit_treatment_models(d));
    BmsmConfig cfg;
    cfg.B = 5;
    const RandomStream root(9);
    const auto post = fit_bmsm(d, d.outcomes(), w, cfg, root);
    const auto X = marginal_design(d, cfg.form);
    for (int b = 0; b < cfg.B; ++b) {
        auto rs = root.derive("dirichlet", static_cast<std::uint64_t>(b));
        const auto pi = draw_dirichlet(d.n(), rs);
        // Normal equations with weights pi * w, solved independently of fit_linear.
        Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(2, 2);
        Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(2);
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const double wi = pi[static_cast<std::size_t>(i)] * w.w[static_cast<std::size_t>(i)];
            xtwx += wi * X.values.row(i).transpose() * X.values.row(i);
            xtwy += wi * X.values.row(i).transpose() * d.y(static_cast<std::size_t>(i));
        }
        const Eigen::VectorXd theta = xtwx.ldlt().solve(xtwy);
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(post.theta_draws[static_cast<std::size_t>(b)][k] == doctest::Approx(theta[k]).epsilon(1e-8));
        }
        CHECK(post.ate_draws[static_cast<std::size_t>(b)] == doctest::Approx(3.0 * theta[1]).epsilon(1e-8));
    }
}

TEST_CASE("point estimate agrees with the mean of 4000 draws") {
    const auto d = draw(500, 5);
    const auto w = compute_weights(d, fit_treatment_models(d));
    BmsmConfig cfg;
    cfg.B = 4000;
    const auto post = fit_bmsm(d, d.outcomes(), w, cfg, RandomStream(11));
    const double mcse = post.sd / std::sqrt(static_cast<double>(post.ate_draws.size()));
    INFO("point ", post.point, " mean ", post.mean, " mcse ", mcse);
    CHECK(std::abs(post.point - post.mean) < 3.0 * mcse);
    CHECK(post.skipped == 0);
    CHECK(post.ci95.first < post.mean);
    CHECK(post.mean < post.ci95.second);
}

TEST_CASE("posterior sd contracts with n") {
    double sd500 = 0.0, sd2000 = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        for (std::size_t n : {500, 2000}) {
            const auto d = draw(n, 100 + s);
            const auto w = compute_weights(d, fit_treatment_models(d));
            BmsmConfig cfg;
            cfg.B = 200;
            const auto post = fit_bmsm(d, d.outcomes(), w, cfg, RandomStream(s));
            (n == 500 ? sd500 : sd2000) += post.sd / 20.0;
        }
    }
    INFO(sd500, " ", sd2000);
    CHECK(sd2000 < sd500);
}

TEST_CASE("permuting subjects keeps the point estimate") {
    const auto d = draw(300, 6);
    const auto w = compute_weights(d, fit_treatment_models(d));
    std::vector<std::size_t> idx(d.n());
    std::iota(idx.begin(), idx.end(), 0);
    std::reverse(idx.begin(), idx.end());
    const auto p = d.select(idx);
    std::vector<double> wp(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) wp[i] = w.w[idx[i]];
    BmsmConfig cfg;
    cfg.B = 2000;
    const auto a = fit_bmsm(d, d.outcomes(), w, cfg, RandomStream(3));
    const auto b = fit_bmsm(p, p.outcomes(), WeightVector{wp, true, {}}, cfg, RandomStream(3));
    CHECK(a.point == doctest::Approx(b.point).epsilon(1e-10));
    const double mcse = std::hypot(a.sd, b.sd) / std::sqrt(2000.0);
    CHECK(std::abs(a.mean - b.mean) < 4.0 * mcse);
    CHECK(b.sd == doctest::Approx(a.sd).epsilon(0.1));
}

TEST_CASE("posterior-mean weights stay close to plug-in weights") {
    const auto d = draw(1000, 7);
    const auto plug = compute_weights(d, fit_treatment_models(d));
    RandomStream rs(8);
    const auto pm = posterior_mean_weights(d, 400, rs);
    REQUIRE(pm.w.size() == plug.w.size());
    double max_rel = 0.0;
    for (std::size_t i = 0; i < d.n(); ++i) max_rel = std::max(max_rel, std::abs(pm.w[i] / plug.w[i] - 1.0));
    INFO("max relative difference ", max_rel);
    CHECK(max_rel < 0.15);
    RandomStream again(8);
    CHECK(posterior_mean_weights(d, 400, again).w == pm.w);
}

TEST_CASE("bad inputs") {
    const auto d = draw(50, 8);
    std::vector<double> ones(d.n(), 1.0);
    BmsmConfig cfg;
    cfg.B = 0;
    CHECK_THROWS_AS(fit_bmsm(d, d.outcomes(), WeightVector{ones, true, {}}, cfg, RandomStream(1)), InvalidInput);
    cfg.B = 10;
    ones.pop_back();
    CHECK_THROWS_AS(fit_bmsm(d, d.outcomes(), WeightVector{ones, true, {}}, cfg, RandomStream(1)), InvalidInput);
}
