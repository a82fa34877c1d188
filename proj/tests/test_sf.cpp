#include <cmath>

#include "doctest.h"
#include "longconf/error.hpp"
#include "longconf/sensitivity.hpp"

using namespace longconf;

namespace {

LongitudinalDataset small_data(std::uint64_t seed, std::size_t n) {
    auto spec = ScenarioSpec::defaults(Scenario::TvBinaryU, n);
    RandomStream rs(seed);
    return simulate(spec, rs).without_latent();
}

Eigen::MatrixXd flat_probs(std::size_t n, std::size_t J, double p) {
    return Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(J), p);
}

}  // namespace

TEST_CASE("zero spec leaves outcomes bitwise unchanged") {
    const auto d = small_data(3, 300);
    Eigen::MatrixXd P = flat_probs(d.n(), 3, 0.4);
    const auto c = correct_outcomes(d, SensitivityFunctionSpec::zero(), P);
    for (std::size_t i = 0; i < d.n(); ++i) {
        CHECK(c.y_sf[i] == d.y(i));
        CHECK(c.correction[i] == 0.0);
    }
    const int a[3] = {1, 0, 1}, x[3] = {0, 1, 1};
    for (std::size_t j = 1; j <= 3; ++j) CHECK(eval_c(SensitivityFunctionSpec::zero(), j, a, x) == 0.0);
}

TEST_CASE("single subject arithmetic") {
    LongitudinalDataset d(1, 1);
    const int x[1] = {0}, a[1] = {1};
    d.add_subject(x, a, 10.0);
    Eigen::MatrixXd P(1, 1);
    P(0, 0) = 0.7;  // P(A=0) = 0.3
    const auto c = correct_outcomes(d, SensitivityFunctionSpec::constant({2.0}), P);
    CHECK(c.y_sf[0] == doctest::Approx(9.4).epsilon(1e-14));
    CHECK(c.correction[0] == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("negating c negates every correction exactly") {
    const auto d = small_data(5, 200);
    Eigen::MatrixXd P(static_cast<Eigen::Index>(d.n()), 3);
    RandomStream rs(11);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) P(i, j) = 0.05 + 0.9 * rs.uniform();
    }
    const auto plus = correct_outcomes(d, SensitivityFunctionSpec::constant({0.7, -1.3, 2.1}), P);
    const auto minus = correct_outcomes(d, SensitivityFunctionSpec::constant({-0.7, 1.3, -2.1}), P);
    const auto bp = correct_outcomes(d, SensitivityFunctionSpec::band(1.5, 0.8, 1), P);
    const auto bm = correct_outcomes(d, SensitivityFunctionSpec::band(1.5, 0.8, -1), P);
    for (std::size_t i = 0; i < d.n(); ++i) {
        CHECK(plus.correction[i] == -minus.correction[i]);
        CHECK(bp.correction[i] == -bm.correction[i]);
        CHECK(plus.y_sf[i] == d.y(i) - plus.correction[i]);
    }
}

TEST_CASE("band is history independent") {
    const auto s = SensitivityFunctionSpec::band(2.0, 0.75, -1);
    const int a1[3] = {0, 0, 0}, a2[3] = {1, 1, 0}, x1[3] = {0, 0, 0}, x2[3] = {1, 0, 1};
    for (std::size_t j = 1; j <= 3; ++j) {
        CHECK(eval_c(s, j, a1, x1) == -1.5);
        CHECK(eval_c(s, j, a2, x2) == -1.5);
    }
    CHECK_THROWS_AS(SensitivityFunctionSpec::band(1.0, 1.0, 2), InvalidInput);
    CHECK_THROWS_AS(SensitivityFunctionSpec::band(1.0, -1.0), InvalidInput);
    CHECK(s.describe() == "band:-2");
    CHECK(SensitivityFunctionSpec::constant({1, 2.5, -3}).describe() == "const:1,2.5,-3");
    CHECK(SensitivityFunctionSpec::zero().describe() == "zero");
}

TEST_CASE("oracle lookup") {
    const auto spec = ScenarioSpec::defaults(Scenario::TvBinaryU);
    const auto table = true_sensitivity_table(spec, OracleMode::ExactEnumeration);
    const auto s = SensitivityFunctionSpec::oracle(table);
    const int a[3] = {1, 1, 1}, x[3] = {0, 1, 1};
    CHECK(eval_c(s, 1, a, x) == table.at({1, "111", "0"}).c);
    CHECK(eval_c(s, 3, a, x) == table.at({3, "111", "011"}).c);
    CHECK(eval_c(s, 1, a, x) != 0.0);

    const auto none = SensitivityFunctionSpec::oracle(
        true_sensitivity_table(ScenarioSpec::defaults(Scenario::NoU), OracleMode::ExactEnumeration));
    for (int code = 0; code < 64; ++code) {
        const int aa[3] = {code & 1, (code >> 1) & 1, (code >> 2) & 1};
        const int xx[3] = {(code >> 3) & 1, (code >> 4) & 1, (code >> 5) & 1};
        for (std::size_t j = 1; j <= 3; ++j) CHECK(std::abs(eval_c(none, j, aa, xx)) < 1e-12);
    }

    SensitivityTable partial = table;
    partial.cells.erase({2, "111", "01"});
    const auto sp = SensitivityFunctionSpec::oracle(partial);
    CHECK_THROWS_AS(eval_c(sp, 2, a, x), UnavailableCell);
}

TEST_CASE("input guards") {
    const auto d = small_data(8, 20);
    CHECK_THROWS_AS(correct_outcomes(d, SensitivityFunctionSpec::constant({1, 1, 1}), flat_probs(d.n(), 2, 0.5)),
                    InvalidInput);
    auto P = flat_probs(d.n(), 3, 0.5);
    P(4, 1) = 1.0;
    CHECK_THROWS_AS(correct_outcomes(d, SensitivityFunctionSpec::constant({1, 1, 1}), P), InvalidInput);
    P(4, 1) = 0.0;
    CHECK_THROWS_AS(correct_outcomes(d, SensitivityFunctionSpec::constant({1, 1, 1}), P), InvalidInput);
    CHECK_THROWS_AS(correct_outcomes(d, SensitivityFunctionSpec::constant({1, 1}), flat_probs(d.n(), 3, 0.5)),
                    InvalidInput);
    const int a[3] = {0, 0, 0}, x[3] = {0, 0, 0};
    CHECK_THROWS_AS(eval_c(SensitivityFunctionSpec::zero(), 4, a, x), InvalidInput);
}

TEST_CASE("oracle probabilities match the table") {
    const auto spec = ScenarioSpec::defaults(Scenario::TvBinaryU);
    const auto table = true_sensitivity_table(spec, OracleMode::ExactEnumeration);
    const auto d = small_data(21, 100);
    const auto P = oracle_treatment_probabilities(d, table);
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto a = bits_of(d.treatments(i));
        const auto x = d.covariates(i);
        for (std::size_t j = 0; j < 3; ++j) {
            const double p = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            CHECK(p == table.at({j + 1, a, bits_of(x.first(j + 1))}).p_treat);
        }
    }
}

TEST_CASE("weighted group means of corrected outcomes recover the potential-outcome means") {
    const auto spec = ScenarioSpec::defaults(Scenario::TvBinaryU, 400000);
    RandomStream rs(99);
    const auto d = simulate(spec, rs).without_latent();
    const auto table = true_sensitivity_table(spec, OracleMode::ExactEnumeration);
    const auto P = oracle_treatment_probabilities(d, table);
    const auto c = correct_outcomes(d, SensitivityFunctionSpec::oracle(table, ProbabilitySource::OracleTable), P);
    for (const char* reg : {"111", "000"}) {
        double sw = 0.0, swy = 0.0;
        std::vector<std::pair<double, double>> wy;
        for (std::size_t i = 0; i < d.n(); ++i) {
            if (d.regime_of(i).to_string() != reg) continue;
            double w = 1.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double p = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                w /= d.a(i, j) ? p : 1.0 - p;
            }
            sw += w;
            swy += w * c.y_sf[i];
            wy.emplace_back(w, c.y_sf[i]);
        }
        const double m = swy / sw;
        double v = 0.0;
        for (const auto& [w, y] : wy) v += w * w * (y - m) * (y - m);
        const double se = std::sqrt(v) / sw;
        const double apo = true_apo(spec, TreatmentRegime::parse(reg));
        INFO(reg, " weighted ", m, " apo ", apo, " se ", se);
        CHECK(std::abs(m - apo) < 4.0 * se);
    }
}

TEST_CASE("residual sd of a noiseless linear outcome is zero, of unit noise about one") {
    LongitudinalDataset d(3, 1);
    RandomStream rs(4);
    LongitudinalDataset noisy(3, 1);
    for (int i = 0; i < 20000; ++i) {
        int x[3], a[3];
        for (int j = 0; j < 3; ++j) {
            x[j] = rs.bernoulli(0.5);
            a[j] = rs.bernoulli(0.5);
        }
        const double mu = 1.0 + a[0] - 2.0 * a[2] + 0.5 * x[1];
        d.add_subject(x, a, mu);
        noisy.add_subject(x, a, mu + rs.normal());
    }
    CHECK(outcome_residual_sd(d) < 1e-10);
    CHECK(outcome_residual_sd(noisy) == doctest::Approx(1.0).epsilon(0.03));
}
