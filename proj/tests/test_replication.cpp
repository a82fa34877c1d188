#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "longconf/error.hpp"
#include "longconf/replication.hpp"

using namespace longconf;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("metrics at the truth") {
    std::vector<double> est(5, -3.0), se(5, 0.0);
    std::vector<std::pair<double, double>> ci(5, {-3.0, -3.0});
    const auto m = compute_metrics(est, se, ci, -3.0);
    CHECK(m.mean == -3.0);
    CHECK(m.rb == 0.0);
    CHECK(m.ese == 0.0);
    CHECK(m.cp == 100.0);
    CHECK(std::isnan(m.serb));
}

TEST_CASE("metrics closed form") {
    const double eps = 0.4, truth = 2.0;
    std::vector<double> est, se;
    std::vector<std::pair<double, double>> ci;
    for (int r = 0; r < 10; ++r) {
        const double e = truth + (r % 2 ? eps : -eps);
        est.push_back(e);
        se.push_back(eps);
        ci.emplace_back(e - 0.5 * eps, e + 0.5 * eps);
    }
    const auto m = compute_metrics(est, se, ci, truth);
    CHECK(m.mean == doctest::Approx(truth));
    CHECK(m.ese == doctest::Approx(eps));
    CHECK(m.ase == doctest::Approx(eps));
    CHECK(m.serb == doctest::Approx(0.0));
    CHECK(m.cp == 0.0);
    CHECK(m.count == 10);

    std::vector<double> one{1.5}, s1{0.2};
    std::vector<std::pair<double, double>> c1{{1.0, 2.0}};
    const auto single = compute_metrics(one, s1, c1, 1.25);
    CHECK(single.mean == 1.5);
    CHECK(single.ese == doctest::Approx(0.25));
    CHECK(single.cp == 100.0);
    CHECK(single.rb == doctest::Approx(20.0));

    const auto zero = compute_metrics(one, s1, c1, 0.0);
    CHECK_FALSE(zero.rb_available);
    CHECK(std::isnan(zero.rb));
    CHECK_THROWS_AS(compute_metrics(one, std::vector<double>{}, c1, 0.0), InvalidInput);
}

TEST_CASE("coverage of a synthetic naive estimator follows normal theory") {
    const double mu = -11.48, sd = 0.60, se = 0.63, truth = -10.27;
    const int ns = 100000;
    RandomStream rs(10);
    std::vector<double> est(ns), ses(ns, se);
    std::vector<std::pair<double, double>> ci(ns);
    for (int r = 0; r < ns; ++r) {
        est[r] = rs.normal(mu, sd);
        ci[r] = {est[r] - 1.96 * se, est[r] + 1.96 * se};
    }
    const auto m = compute_metrics(est, ses, ci, truth);
    const double half = 1.96 * se;
    const double theory = 100.0 * (phi((truth + half - mu) / sd) - phi((truth - half - mu) / sd));
    INFO("cp ", m.cp, " theory ", theory);
    CHECK(std::abs(m.cp - theory) < 1.0);
    CHECK(m.mean == doctest::Approx(mu).epsilon(0.001));
    CHECK(m.ase == doctest::Approx(se));
}

TEST_CASE("estimator names") {
    CHECK(parse_estimator("sf-bayes") == Estimator::SfBayesMsm);
    CHECK(estimator_label(Estimator::MsmUExcluded) == "MSM U excluded");
    CHECK(estimator_key(Estimator::BsaTimeVarying) == "bsa-tv");
    CHECK(parse_estimator_list("msm-x,msm-u,,bsa-ti").size() == 3);
    CHECK_THROWS_AS(parse_estimator("msm"), InvalidInput);
}

TEST_CASE("report rendering") {
    ReplicationReport rep;
    rep.scenario = "tv-binary-u";
    rep.true_ate = -10.27;
    CHECK(render_report(rep, ReportFormat::Csv) == "Estimator,Mean,RB,SD,SE,CP\n");
    MetricRow a;
    a.estimator = "MSM U excluded";
    a.mean = -11.4812;
    a.rb = -11.7936;
    a.ese = 0.6049;
    a.ase = 0.6251;
    a.cp = 49.0;
    rep.rows.push_back(a);
    const auto csv = render_report(rep, ReportFormat::Csv);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv == "Estimator,Mean,RB,SD,SE,CP\n\"MSM U excluded\",-11.48,-11.79,0.60,0.63,49.00\n");

    MetricRow b;
    b.estimator = "BSA time-varying U";
    b.mean = -0.001;
    b.rb_available = false;
    b.rb = std::nan("");
    b.ese = 1.5;
    b.ase = 2.25;
    b.cp = 100.0;
    b.valid = false;
    rep.rows.push_back(b);
    CHECK(render_report(rep, ReportFormat::Markdown) == slurp(std::string(LONGCONF_GOLDEN_DIR) + "/report.md"));
}

TEST_CASE("single replication and determinism") {
    StudyConfig cfg;
    cfg.scenario = ScenarioSpec::defaults(Scenario::TvBinaryU, 300);
    cfg.ns = 1;
    cfg.estimators = {Estimator::MsmUExcluded};
    cfg.msm.bootstrap = 30;
    const auto r = run_study(cfg);
    REQUIRE(r.rows.size() == 1);
    const auto& rec = r.records[0][0];
    CHECK(r.rows[0].mean == rec.estimate);
    CHECK(r.rows[0].ese == doctest::Approx(std::abs(rec.estimate - r.true_ate)));
    CHECK((r.rows[0].cp == 0.0 || r.rows[0].cp == 100.0));
    CHECK(r.true_ate == doctest::Approx(-10.155292893150028).epsilon(1e-12));

    StudyConfig many;
    many.scenario = ScenarioSpec::defaults(Scenario::TvBinaryU, 300);
    many.ns = 6;
    many.estimators = {Estimator::MsmUExcluded, Estimator::MsmUIncluded, Estimator::SfFreqMsm, Estimator::SfBayesMsm};
    many.msm.bootstrap = 20;
    many.bmsm.B = 50;
    many.jobs = 1;
    const auto serial = run_study(many);
    many.jobs = 4;
    const auto parallel = run_study(many);
    CHECK(render_records_csv(serial) == render_records_csv(parallel));
    CHECK(render_report(serial, ReportFormat::Csv) == render_report(parallel, ReportFormat::Csv));
    for (const auto& row : serial.rows) {
        CHECK(row.valid);
        CHECK(row.cp >= 0.0);
        CHECK(row.cp <= 100.0);
        CHECK(row.ese >= 0.0);
    }
    // Every estimator sees the same replication data: U-excluded estimates do not depend on the estimator set.
    StudyConfig alone = many;
    alone.estimators = {Estimator::MsmUExcluded};
    const auto a = run_study(alone);
    for (int r2 = 0; r2 < 6; ++r2) CHECK(a.records[0][r2].estimate == serial.records[0][r2].estimate);
}

TEST_CASE("failing estimator is flagged invalid") {
    StudyConfig cfg;
    cfg.scenario = ScenarioSpec::defaults(Scenario::TvBinaryU, 200);
    cfg.ns = 3;
    cfg.estimators = {Estimator::SfFreqMsm, Estimator::MsmUExcluded};
    cfg.msm.bootstrap = 10;
    SensitivityTable empty;
    empty.visits = 3;
    empty.covariates_per_visit = 1;
    cfg.table = empty;
    const auto r = run_study(cfg);
    CHECK_FALSE(r.rows[0].valid);
    CHECK(r.rows[0].failures == 3);
    CHECK(r.records[0][1].failed);
    CHECK_FALSE(r.records[0][1].error.empty());
    CHECK(r.rows[1].valid);
    CHECK(render_report(r, ReportFormat::Csv).find("(invalid)") != std::string::npos);
    cfg.ns = 0;
    CHECK_THROWS_AS(run_study(cfg), InvalidInput);
}
