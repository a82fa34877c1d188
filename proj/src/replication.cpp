#include "longconf/replication.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "longconf/error.hpp"

namespace longconf {

namespace {

struct EstimatorInfo {
    Estimator e;
    const char* key;
    const char* label;
};

constexpr EstimatorInfo kEstimators[] = {
    {Estimator::MsmUExcluded, "msm-x", "MSM U excluded"},
    {Estimator::MsmUIncluded, "msm-u", "MSM U included"},
    {Estimator::SfFreqMsm, "sf-freq", "Sensitivity Function (frequentist MSM)"},
    {Estimator::SfBayesMsm, "sf-bayes", "Sensitivity Function (Bayesian MSM)"},
    {Estimator::BsaTimeInvariant, "bsa-ti", "BSA time-invariant U"},
    {Estimator::BsaTimeVarying, "bsa-tv", "BSA time-varying U"},
};

const EstimatorInfo& info(Estimator e) {
    for (const auto& i : kEstimators) {
        if (i.e == e) return i;
    }
    throw InvalidInput("unknown estimator");
}

}  // namespace

Estimator parse_estimator(const std::string& name) {
    for (const auto& i : kEstimators) {
        if (name == i.key) return i.e;
    }
    throw InvalidInput("unknown estimator '" + name + "' (msm-x, msm-u, sf-freq, sf-bayes, bsa-ti, bsa-tv)");
}

std::string estimator_key(Estimator e) { return info(e).key; }
std::string estimator_label(Estimator e) { return info(e).label; }

std::vector<Estimator> parse_estimator_list(const std::string& csv) {
    std::vector<Estimator> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(parse_estimator(item));
    }
    return out;
}

BsaConfig StudyConfig::harness_bsa_defaults() {
    BsaConfig c;
    c.chain.burn_in = 2000;
    c.chain.kept_iterations = 2000;
    c.chain.thin = 2;
    return c;
}

BsaConfig StudyConfig::full_length_bsa() {
    BsaConfig c;
    c.chain.burn_in = 25000;
    c.chain.kept_iterations = 25000;
    c.chain.thin = 5;
    return c;
}

MetricRow compute_metrics(std::span<const double> est, std::span<const double> ses,
                          std::span<const std::pair<double, double>> cis, double truth) {
    if (est.size() != ses.size() || est.size() != cis.size()) {
        throw InvalidInput("compute_metrics: arrays are not aligned");
    }
    MetricRow m;
    m.count = static_cast<int>(est.size());
    if (est.empty()) {
        m.valid = false;
        return m;
    }
    const auto n = static_cast<double>(est.size());
    double sum = 0.0, rel = 0.0, sq = 0.0, se_sum = 0.0, covered = 0.0;
    for (std::size_t r = 0; r < est.size(); ++r) {
        sum += est[r];
        if (truth != 0.0) rel += (est[r] - truth) / truth;
        sq += (est[r] - truth) * (est[r] - truth);
        se_sum += ses[r];
        if (cis[r].first <= truth && truth <= cis[r].second) covered += 1.0;
    }
    m.mean = sum / n;
    m.rb_available = truth != 0.0;
    m.rb = m.rb_available ? 100.0 * rel / n : std::numeric_limits<double>::quiet_NaN();
    m.ese = std::sqrt(sq / n);
    m.ase = se_sum / n;
    m.serb = m.ese > 0.0 ? 100.0 * (m.ase - m.ese) / m.ese : std::numeric_limits<double>::quiet_NaN();
    m.cp = 100.0 * covered / n;
    return m;
}

namespace {

struct StudyContext {
    const StudyConfig& cfg;
    double truth = 0.0;
    std::optional<SensitivityTable> table;
};

bool needs_table(const StudyConfig& cfg) {
    for (auto e : cfg.estimators) {
        if (e == Estimator::SfFreqMsm || e == Estimator::SfBayesMsm) return true;
    }
    return false;
}

ReplicationRecord run_one(const StudyContext& ctx, Estimator est, int rep, const LongitudinalDataset& full,
                          const LongitudinalDataset& obs, const RandomStream& rs) {
    const auto& cfg = ctx.cfg;
    ReplicationRecord rec;
    rec.replication = rep;
    const auto es = rs.derive(estimator_key(est), 0);
    switch (est) {
        case Estimator::MsmUExcluded:
        case Estimator::MsmUIncluded: {
            const bool with_u = est == Estimator::MsmUIncluded;
            const auto& d = with_u ? full : obs;
            const auto w = compute_weights(d, fit_treatment_models(d, with_u));
            const auto r = fit_msm(d, d.outcomes(), w, cfg.msm, es);
            rec.estimate = r.ate;
            rec.se = r.se;
            std::tie(rec.lo, rec.hi) = r.ci95;
            break;
        }
        case Estimator::SfFreqMsm:
        case Estimator::SfBayesMsm: {
            const auto models = fit_treatment_models(obs, false);
            const auto spec = SensitivityFunctionSpec::oracle(*ctx.table, cfg.sf_probability);
            const auto corrected = correct_with_models(obs, spec, models);
            if (est == Estimator::SfFreqMsm) {
                const auto r = fit_msm(obs, corrected.y_sf, compute_weights(obs, models), cfg.msm, es);
                rec.estimate = r.ate;
                rec.se = r.se;
                std::tie(rec.lo, rec.hi) = r.ci95;
            } else {
                auto ws = es.derive("weights", 0);
                const auto w = cfg.bmsm.weight_mode == WeightMode::PluginML ? compute_weights(obs, models)
                                                                             : bmsm_weights(obs, cfg.bmsm, ws);
                const auto post = fit_bmsm(obs, corrected.y_sf, w, cfg.bmsm, es);
                rec.estimate = post.point;
                rec.se = post.sd;
                std::tie(rec.lo, rec.hi) = post.ci95;
            }
            break;
        }
        case Estimator::BsaTimeInvariant:
        case Estimator::BsaTimeVarying: {
            const auto u = est == Estimator::BsaTimeVarying ? UStructure::TimeVarying : UStructure::TimeInvariant;
            const auto model = build_model(obs.visits(), obs.covariates_per_visit(), u, cfg.priors);
            const auto post = run_bsa(model, obs, cfg.bsa, es);
            rec.estimate = post.mean;
            rec.se = post.sd;
            std::tie(rec.lo, rec.hi) = post.ci95;
            break;
        }
    }
    return rec;
}

}  // namespace

ReplicationReport run_study(const StudyConfig& cfg) {
    if (cfg.ns < 1) throw InvalidInput("run_study: ns must be >= 1");
    StudyContext ctx{cfg, 0.0, cfg.table};
    const SeedSpec seed{cfg.seed, {}};
    const bool binary = cfg.scenario.all_binary();
    const auto treated = cfg.msm.treated, reference = cfg.msm.reference;
    if (cfg.true_ate) {
        ctx.truth = *cfg.true_ate;
    } else if (binary) {
        ctx.truth = true_ate(cfg.scenario, treated, reference, OracleMode::ExactEnumeration).true_ate;
    } else {
        auto ts = derive_stream(seed, "truth", 0);
        ctx.truth = true_ate(cfg.scenario, treated, reference, OracleMode::MonteCarlo, cfg.truth_mc_draws, &ts).true_ate;
    }
    if (!ctx.table && needs_table(cfg)) {
        if (binary) {
            ctx.table = true_sensitivity_table(cfg.scenario, OracleMode::ExactEnumeration);
        } else {
            auto ts = derive_stream(seed, "sf-table", 0);
            ctx.table = true_sensitivity_table(cfg.scenario, OracleMode::MonteCarlo, cfg.table_mc_draws, &ts);
        }
    }

    const std::size_t E = cfg.estimators.size();
    const auto ns = static_cast<std::size_t>(cfg.ns);
    std::vector<std::vector<ReplicationRecord>> records(E, std::vector<ReplicationRecord>(ns));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= ns) return;
            const auto rs = derive_stream(seed, "rep", r);
            auto sim = rs.derive("data", 0);
            const auto full = simulate(cfg.scenario, sim);
            const auto obs = full.without_latent();
            for (std::size_t e = 0; e < E; ++e) {
                try {
                    records[e][r] = run_one(ctx, cfg.estimators[e], static_cast<int>(r), full, obs, rs);
                } catch (const Error& ex) {
                    records[e][r].replication = static_cast<int>(r);
                    records[e][r].failed = true;
                    records[e][r].error = ex.what();
                }
            }
        }
    };
    const unsigned jobs = std::max(1U, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(ns)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ReplicationReport rep;
    rep.scenario = scenario_name(cfg.scenario.scenario);
    rep.true_ate = ctx.truth;
    for (std::size_t e = 0; e < E; ++e) {
        std::vector<double> est, se;
        std::vector<std::pair<double, double>> ci;
        int failures = 0;
        for (const auto& r : records[e]) {
            if (r.failed) {
                ++failures;
                continue;
            }
            est.push_back(r.estimate);
            se.push_back(r.se);
            ci.emplace_back(r.lo, r.hi);
        }
        auto row = compute_metrics(est, se, ci, ctx.truth);
        row.estimator = estimator_label(cfg.estimators[e]);
        row.failures = failures;
        if (failures * 20 > cfg.ns) row.valid = false;
        rep.rows.push_back(row);
    }
    rep.records = std::move(records);
    return rep;
}

namespace {

std::string fixed2(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    if (s == "-0.00") s = "0.00";
    return s;
}

}  // namespace

std::string render_report(const ReplicationReport& report, ReportFormat format) {
    std::ostringstream os;
    const char* cols[] = {"Estimator", "Mean", "RB", "SD", "SE", "CP"};
    auto cells = [](const MetricRow& r) {
        const std::string name = r.valid ? r.estimator : r.estimator + " (invalid)";
        return std::vector<std::string>{name, fixed2(r.mean), r.rb_available ? fixed2(r.rb) : "NA",
                                        fixed2(r.ese), fixed2(r.ase), fixed2(r.cp)};
    };
    if (format == ReportFormat::Csv) {
        os << "Estimator,Mean,RB,SD,SE,CP\n";
        for (const auto& r : report.rows) {
            const auto c = cells(r);
            os << '"' << c[0] << '"';
            for (std::size_t k = 1; k < c.size(); ++k) os << ',' << c[k];
            os << '\n';
        }
        return os.str();
    }
    os << '|';
    for (const char* c : cols) os << ' ' << c << " |";
    os << "\n|:--|--:|--:|--:|--:|--:|\n";
    for (const auto& r : report.rows) {
        os << '|';
        for (const auto& c : cells(r)) os << ' ' << c << " |";
        os << '\n';
    }
    return os.str();
}

std::string render_records_csv(const ReplicationReport& report) {
    std::ostringstream os;
    os << "estimator,replication,estimate,se,lo,hi,failed\n";
    for (std::size_t e = 0; e < report.rows.size(); ++e) {
        for (const auto& r : report.records[e]) {
            os << '"' << report.rows[e].estimator << "\"," << r.replication << ',' << format_double(r.estimate)
               << ',' << format_double(r.se) << ',' << format_double(r.lo) << ',' << format_double(r.hi) << ','
               << (r.failed ? 1 : 0) << '\n';
        }
    }
    return os.str();
}

}  // namespace longconf
