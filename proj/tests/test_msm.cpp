#include <cmath>
#include <numeric>

#include "doctest.h"
#include "longconf/error.hpp"
#include "longconf/msm.hpp"
#include "longconf/sensitivity.hpp"

using namespace longconf;

namespace {

LongitudinalDataset draw(Scenario s, std::size_t n, std::uint64_t seed, bool keep_latent = false) {
    RandomStream rs(seed);
    auto d = simulate(ScenarioSpec::defaults(s, n), rs);
    return keep_latent ? d : d.without_latent();
}

}  // namespace

TEST_CASE("denominator models recover the generating treatment coefficients") {
    const auto spec = ScenarioSpec::defaults(Scenario::NoU, 500000);
    RandomStream rs(17);
    const auto d = simulate(spec, rs);
    const auto m = fit_treatment_models(d);
    REQUIRE(m.denominator.size() == 3);
    auto near = [&](const GlmFit& f, const std::string& col, double truth) {
        INFO(col, " ", f.coef(col), " vs ", truth);
        CHECK(std::abs(f.coef(col) - truth) < 3.0 * f.se(col));
    };
    near(m.denominator[0], "(Intercept)", spec.coefficient("A1.intercept"));
    near(m.denominator[0], "x1", spec.coefficient("A1.X1"));
    near(m.denominator[1], "a1", spec.coefficient("A2.A1"));
    near(m.denominator[1], "x2", spec.coefficient("A2.X2"));
    near(m.denominator[2], "a1", 0.0);
    near(m.denominator[2], "a2", spec.coefficient("A3.A2"));
    near(m.denominator[2], "x3", spec.coefficient("A3.X3"));
    CHECK(m.numerator[2].names == std::vector<std::string>{"(Intercept)", "a1", "a2"});
}

TEST_CASE("latent columns in treatment models") {
    const auto full = draw(Scenario::TvBinaryU, 2000, 3, true);
    const auto m = fit_treatment_models(full, true);
    CHECK(m.denominator[2].names ==
          std::vector<std::string>{"(Intercept)", "a1", "a2", "x1", "x2", "x3", "u1", "u2", "u3"});
    CHECK_THROWS_AS(fit_treatment_models(full.without_latent(), true), InvalidInput);
    CHECK_THROWS_AS(fit_treatment_models(full, false), InvalidInput);
}

TEST_CASE("identical numerator and denominator give unit weights") {
    const auto d = draw(Scenario::TvBinaryU, 500, 9);
    const auto m = fit_treatment_models(d);
    const auto P = numerator_probabilities(d, m);
    const auto w = weights_from_probabilities(d, P, P);
    for (double v : w.w) CHECK(v == 1.0);
    const auto s = w.summary();
    CHECK(s.min == 1.0);
    CHECK(s.max == 1.0);
    CHECK(s.mean == 1.0);
}

TEST_CASE("stabilized weights average one") {
    const auto d = draw(Scenario::TvBinaryU, 10000, 21);
    const auto w = compute_weights(d, fit_treatment_models(d));
    const double n = static_cast<double>(w.w.size());
    const double mean = std::accumulate(w.w.begin(), w.w.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : w.w) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (n - 1.0) / n);
    INFO("mean ", mean, " se ", se);
    CHECK(std::abs(mean - 1.0) < 5.0 * se);
    for (double v : w.w) CHECK(std::isfinite(v));
}

TEST_CASE("weight arithmetic for one subject") {
    LongitudinalDataset d(3, 1);
    const int x[3] = {0, 0, 0}, a[3] = {1, 1, 1};
    d.add_subject(x, a, 0.0);
    const double eps = 1e-6;
    Eigen::MatrixXd num(1, 3), den(1, 3);
    num << 0.5, 0.5, 0.5;
    den << 0.25, 0.5, 1.0 - eps;
    const auto w = weights_from_probabilities(d, num, den);
    CHECK(w.w[0] == doctest::Approx(2.0 * 1.0 * (0.5 / (1.0 - eps))).epsilon(1e-14));

    den(0, 2) = 1e-13;
    CHECK_THROWS_AS(weights_from_probabilities(d, num, den), FitError);
    LongitudinalDataset d0(3, 1);
    const int a0[3] = {1, 1, 0};
    d0.add_subject(x, a0, 0.0);
    den(0, 2) = 1.0 - 1e-13;
    CHECK_THROWS_AS(weights_from_probabilities(d0, num, den), FitError);
}

TEST_CASE("truncation clamps to percentiles") {
    const auto d = draw(Scenario::TvBinaryU, 1000, 4);
    const auto m = fit_treatment_models(d);
    const auto raw = compute_weights(d, m);
    const auto t = compute_weights(d, m, std::make_pair(1.0, 99.0));
    const auto rs = raw.summary(), ts = t.summary();
    CHECK(ts.min >= rs.min);
    CHECK(ts.max <= rs.max);
    int clamped = 0;
    for (std::size_t i = 0; i < raw.w.size(); ++i) clamped += raw.w[i] != t.w[i];
    CHECK(clamped <= 22);
}

TEST_CASE("saturated MSM with constant outcome and unit weights") {
    const auto d = draw(Scenario::TvBinaryU, 2000, 6);
    std::vector<double> y(d.n(), 3.25), w1(d.n(), 1.0);
    MsmConfig cfg;
    cfg.form = MarginalForm::Saturated;
    cfg.bootstrap = 50;
    const auto r = fit_msm(d, y, WeightVector{w1, true, {}}, cfg, RandomStream(1));
    CHECK(std::abs(r.ate) < 1e-12);
    CHECK(r.se < 1e-12);
}

TEST_CASE("saturated ATE equals weighted group-mean difference") {
    const auto d = draw(Scenario::TvBinaryU, 3000, 12);
    const auto w = compute_weights(d, fit_treatment_models(d));
    MsmConfig cfg;
    cfg.form = MarginalForm::Saturated;
    const double ate = msm_ate(d, d.outcomes(), w.w, cfg);
    double s1 = 0, n1 = 0, s0 = 0, n0 = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto r = d.regime_of(i).to_string();
        if (r == "111") {
            s1 += w.w[i] * d.y(i);
            n1 += w.w[i];
        } else if (r == "000") {
            s0 += w.w[i] * d.y(i);
            n0 += w.w[i];
        }
    }
    CHECK(ate == doctest::Approx(s1 / n1 - s0 / n0).epsilon(1e-10));
}

TEST_CASE("weight scale does not move the fit") {
    const auto d = draw(Scenario::TvBinaryU, 800, 13);
    const auto w = compute_weights(d, fit_treatment_models(d));
    auto w7 = w.w;
    for (auto& v : w7) v *= 7.5;
    for (auto form : {MarginalForm::CumulativeDose, MarginalForm::Saturated}) {
        MsmConfig cfg;
        cfg.form = form;
        GlmFit a, b;
        const double e1 = msm_ate(d, d.outcomes(), w.w, cfg, &a);
        const double e2 = msm_ate(d, d.outcomes(), w7, cfg, &b);
        CHECK(e1 == doctest::Approx(e2).epsilon(1e-10));
        for (Eigen::Index k = 0; k < a.coefficients.size(); ++k) {
            CHECK(a.coefficients[k] == doctest::Approx(b.coefficients[k]).epsilon(1e-10));
        }
    }
}

TEST_CASE("zero sensitivity function reproduces the naive fit bit for bit") {
    const auto d = draw(Scenario::TvBinaryU, 500, 14);
    const auto m = fit_treatment_models(d);
    const auto w = compute_weights(d, m);
    const auto c = correct_outcomes(d, SensitivityFunctionSpec::zero(), denominator_probabilities(d, m));
    MsmConfig cfg;
    cfg.bootstrap = 40;
    const RandomStream rs(77);
    const auto raw = fit_msm(d, d.outcomes(), w, cfg, rs);
    const auto sf = fit_msm(c.base, c.y_sf, w, cfg, rs);
    CHECK(raw.ate == sf.ate);
    CHECK(raw.se == sf.se);
    CHECK(raw.ci95 == sf.ci95);
}

TEST_CASE("bootstrap is deterministic and the interval is symmetric") {
    const auto d = draw(Scenario::TvBinaryU, 500, 15);
    const auto w = compute_weights(d, fit_treatment_models(d));
    MsmConfig cfg;
    const auto a = fit_msm(d, d.outcomes(), w, cfg, RandomStream(5));
    const auto b = fit_msm(d, d.outcomes(), w, cfg, RandomStream(5));
    CHECK(a.se == b.se);
    CHECK(a.se > 0.0);
    CHECK(a.ci95.first == doctest::Approx(a.ate - 1.96 * a.se));
    CHECK(a.ci95.second == doctest::Approx(a.ate + 1.96 * a.se));
    CHECK(a.bootstrap_failures == 0);
    const auto c = fit_msm(d, d.outcomes(), w, cfg, RandomStream(6));
    CHECK(c.se != a.se);
    CHECK(c.ate == a.ate);
}

TEST_CASE("saturated form names a missing sequence") {
    LongitudinalDataset d(3, 1);
    const int x[3] = {0, 1, 0};
    for (int s = 0; s < 8; ++s) {
        if (s == 5) continue;
        const int a[3] = {(s >> 2) & 1, (s >> 1) & 1, s & 1};
        d.add_subject(x, a, s);
    }
    try {
        marginal_design(d, MarginalForm::Saturated);
        FAIL("expected an error");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("101") != std::string::npos);
    }
    CHECK(marginal_design(d, MarginalForm::CumulativeDose).cols() == 2);
}

TEST_CASE("cumulative-dose contrast on a noiseless linear dose model") {
    LongitudinalDataset d(3, 1);
    RandomStream rs(2);
    for (int i = 0; i < 400; ++i) {
        int x[3], a[3];
        for (int j = 0; j < 3; ++j) {
            x[j] = rs.bernoulli(0.5);
            a[j] = rs.bernoulli(0.4);
        }
        d.add_subject(x, a, 5.0 - 1.5 * (a[0] + a[1] + a[2]));
    }
    std::vector<double> w(d.n(), 1.0);
    CHECK(msm_ate(d, d.outcomes(), w, MsmConfig{}) == doctest::Approx(-4.5).epsilon(1e-12));
}
