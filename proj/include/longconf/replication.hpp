#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "longconf/bmsm.hpp"
#include "longconf/bsa.hpp"
#include "longconf/dgp.hpp"
#include "longconf/msm.hpp"
#include "longconf/sensitivity.hpp"

namespace longconf {

enum class Estimator { MsmUExcluded, MsmUIncluded, SfFreqMsm, SfBayesMsm, BsaTimeInvariant, BsaTimeVarying };

/// Short names: msm-x, msm-u, sf-freq, sf-bayes, bsa-ti, bsa-tv.
Estimator parse_estimator(const std::string& name);
std::string estimator_key(Estimator e);
/// Row label used in reports.
std::string estimator_label(Estimator e);
std::vector<Estimator> parse_estimator_list(const std::string& csv);

struct StudyConfig {
    ScenarioSpec scenario = ScenarioSpec::defaults(Scenario::TvBinaryU);
    int ns = 100;
    std::vector<Estimator> estimators;
    std::uint64_t seed = 7;
    unsigned jobs = 1;

    /// Truth and sensitivity table: exact enumeration when every node is binary, else Monte Carlo.
    std::uint64_t truth_mc_draws = 10'000'000;
    std::uint64_t table_mc_draws = 1'000'000;
    std::optional<double> true_ate;                 // skips the oracle when set
    std::optional<SensitivityTable> table;          // skips the table oracle when set

    MsmConfig msm;
    BmsmConfig bmsm;
    ProbabilitySource sf_probability = ProbabilitySource::FittedModels;
    BsaConfig bsa = harness_bsa_defaults();
    PriorConfig priors = PriorConfig::simulation();

    /// Short chains for desk-scale studies: burn-in 2000, keep 2000, thin 2.
    static BsaConfig harness_bsa_defaults();
    /// Chain lengths as reported for the application: burn-in 25000, keep 25000, thin 5.
    static BsaConfig full_length_bsa();
};

struct ReplicationRecord {
    int replication = 0;
    double estimate = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool failed = false;
    std::string error;
};

struct MetricRow {
    std::string estimator;
    double mean = 0.0;
    double rb = 0.0;  // percent
    bool rb_available = true;
    double ese = 0.0;
    double ase = 0.0;
    double serb = 0.0;  // percent, aggregate (ASE - ESE) / ESE
    double cp = 0.0;    // percent
    int count = 0;
    int failures = 0;
    bool valid = true;
};

struct ReplicationReport {
    std::string scenario;
    double true_ate = 0.0;
    std::vector<MetricRow> rows;
    std::vector<std::vector<ReplicationRecord>> records;  // per estimator, by replication
};

/// Mean, RB = 100 mean((est - ATE) / ATE), ESE = sqrt(mean((est - ATE)^2)), ASE = mean(se),
/// SERB = 100 (ASE - ESE) / ESE, CP = 100 * share of intervals covering the truth.
MetricRow compute_metrics(std::span<const double> estimates, std::span<const double> ses,
                          std::span<const std::pair<double, double>> cis, double true_ate);

/// Replication r draws everything from derive_stream(seed, "rep", r); replications
/// run on `jobs` worker threads and are aggregated by index.
ReplicationReport run_study(const StudyConfig& cfg);

enum class ReportFormat { Csv, Markdown };

/// Columns Estimator, Mean, RB, SD, SE, CP (SD is ESE, SE is ASE), two decimals.
std::string render_report(const ReplicationReport& report, ReportFormat format);

/// One line per estimator and replication: estimator,replication,estimate,se,lo,hi,failed.
std::string render_records_csv(const ReplicationReport& report);

}  // namespace longconf
