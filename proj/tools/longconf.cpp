#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "longconf/bmsm.hpp"
#include "longconf/bsa.hpp"
#include "longconf/dataset.hpp"
#include "longconf/dgp.hpp"
#include "longconf/error.hpp"
#include "longconf/msm.hpp"
#include "longconf/replication.hpp"
#include "longconf/sensitivity.hpp"

using json = nlohmann::ordered_json;
using namespace longconf;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json pair_json(const std::pair<double, double>& p) { return json::array({num(p.first), num(p.second)}); }

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + out);
    f << text;
}

void emit_json(const json& j, const std::string& out) { emit(j.dump(2) + "\n", out); }

ScenarioSpec make_scenario(const std::string& name, std::size_t n, const std::vector<std::string>& sets) {
    auto spec = ScenarioSpec::defaults(parse_scenario(name), n);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InvalidInput("--set expects node.param=value, got '" + s + "'");
        spec.set_coefficient(s.substr(0, eq), std::stod(s.substr(eq + 1)));
    }
    return spec;
}

RandomStream stream_for(std::uint64_t seed, const char* label) { return derive_stream(SeedSpec{seed, {}}, label, 0); }

SensitivityFunctionSpec parse_sf(const std::string& text, const std::string& probability,
                                 const LongitudinalDataset& data) {
    if (probability != "fitted" && probability != "oracle") throw InvalidInput("--probability expects fitted or oracle");
    return parse_sensitivity(text, data,
                             probability == "oracle" ? ProbabilitySource::OracleTable : ProbabilitySource::FittedModels);
}

MarginalForm parse_form(const std::string& s) {
    if (s == "cumdose") return MarginalForm::CumulativeDose;
    if (s == "saturated") return MarginalForm::Saturated;
    throw InvalidInput("--marginal expects cumdose or saturated");
}

json weight_json(const WeightSummary& s) { return {{"min", num(s.min)}, {"mean", num(s.mean)}, {"max", num(s.max)}}; }

LongitudinalDataset load(const std::string& path, bool keep_latent) {
    auto d = read_csv_file(path);
    return keep_latent ? d : d.without_latent();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Longitudinal causal estimation under unmeasured time-varying confounding"};
    app.require_subcommand(1);

    std::string scenario = "tv-binary-u", out, in, sf_text, probability = "fitted", marginal = "cumdose";
    std::vector<std::string> sets;
    std::size_t n = 500;
    std::uint64_t seed = 7;
    std::string treated = "111", reference = "000";

    auto* sim = app.add_subcommand("simulate", "Draw a dataset from a simulation scenario");
    bool drop_latent = false;
    sim->add_option("--scenario", scenario, "tv-binary-u, tv-normal-u, two-tv-u, ti-binary-u or no-u");
    sim->add_option("--n", n, "Subjects");
    sim->add_option("--seed", seed);
    sim->add_option("--set", sets, "Override a coefficient, node.param=value");
    sim->add_flag("--drop-latent", drop_latent, "Omit the oracle-only u columns");
    sim->add_option("--out", out, "Output CSV (default stdout)");

    auto* ora = app.add_subcommand("oracle", "True ATE and sensitivity-function table");
    std::string mode = "auto", table_out;
    std::uint64_t draws = 10'000'000;
    ora->add_option("--scenario", scenario);
    ora->add_option("--set", sets);
    ora->add_option("--mode", mode, "exact, mc or auto");
    ora->add_option("--draws", draws, "Monte Carlo draws");
    ora->add_option("--seed", seed);
    ora->add_option("--treated", treated);
    ora->add_option("--reference", reference);
    ora->add_option("--table-out", table_out, "Write the sensitivity table as CSV");
    ora->add_option("--out", out);

    auto* cor = app.add_subcommand("correct", "Add corrected outcomes y_sf to a dataset");
    cor->add_option("--in", in)->required();
    cor->add_option("--sf", sf_text, "zero | const:c1,c2,c3 | oracle:<table.csv> | band:<h>")->required();
    cor->add_option("--probability", probability, "fitted or oracle");
    cor->add_option("--out", out);

    bool include_u = false;
    int boot = 200;
    auto* msm = app.add_subcommand("msm", "Inverse-probability-weighted marginal structural model");
    msm->add_option("--in", in)->required();
    msm->add_flag("--include-u", include_u, "Treat the latent columns as measured");
    msm->add_option("--sf", sf_text);
    msm->add_option("--probability", probability);
    msm->add_option("--marginal", marginal, "cumdose or saturated");
    msm->add_option("--boot", boot);
    msm->add_option("--seed", seed);
    msm->add_option("--treated", treated);
    msm->add_option("--reference", reference);
    msm->add_option("--out", out);

    int B = 1000, posterior_draws = 1000;
    std::string weight_mode = "plugin";
    auto* bm = app.add_subcommand("bmsm", "Bayesian marginal structural model with Dirichlet weights");
    bm->add_option("--in", in)->required();
    bm->add_option("--sf", sf_text);
    bm->add_option("--probability", probability);
    bm->add_option("--marginal", marginal);
    bm->add_option("--B", B);
    bm->add_option("--weights", weight_mode, "plugin or posterior");
    bm->add_option("--posterior-draws", posterior_draws);
    bm->add_option("--seed", seed);
    bm->add_option("--treated", treated);
    bm->add_option("--reference", reference);
    bm->add_option("--out", out);

    std::string ustruct = "time-varying", priors = "simulation", chain_out;
    ChainConfig chain;
    std::size_t mc_paths = 0;
    auto* bs = app.add_subcommand("bsa", "Bayesian latent-variable sensitivity analysis");
    bs->add_option("--in", in)->required();
    bs->add_option("--u", ustruct, "time-varying or time-invariant");
    bs->add_option("--burnin", chain.burn_in);
    bs->add_option("--keep", chain.kept_iterations);
    bs->add_option("--thin", chain.thin);
    bs->add_option("--priors", priors, "simulation or application");
    bs->add_option("--mc-paths", mc_paths, "Forward paths per draw (0 = n)");
    bs->add_option("--seed", seed);
    bs->add_option("--treated", treated);
    bs->add_option("--reference", reference);
    bs->add_option("--chain-out", chain_out, "Write the raw chain as CSV");
    bs->add_option("--out", out);

    int ns = 100;
    std::string estimators = "msm-x,msm-u,sf-freq,sf-bayes", format = "csv", records_out;
    unsigned jobs = 1;
    bool paper_scale = false;
    std::uint64_t truth_draws = 10'000'000, table_draws = 1'000'000;
    auto* rep = app.add_subcommand("replicate", "Simulation study over replications");
    rep->add_option("--scenario", scenario);
    rep->add_option("--set", sets);
    rep->add_option("--n", n);
    rep->add_option("--ns", ns);
    rep->add_option("--estimators", estimators, "msm-x,msm-u,sf-freq,sf-bayes,bsa-ti,bsa-tv");
    rep->add_option("--seed", seed);
    rep->add_option("--jobs", jobs);
    rep->add_option("--boot", boot);
    rep->add_option("--B", B);
    rep->add_option("--probability", probability, "Probabilities for the oracle sensitivity function");
    rep->add_flag("--paper-scale", paper_scale, "Full-length BSA chains");
    rep->add_option("--truth-draws", truth_draws);
    rep->add_option("--table-draws", table_draws);
    rep->add_option("--format", format, "csv or markdown");
    rep->add_option("--records", records_out, "Write per-replication records as CSV");
    rep->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto r1 = TreatmentRegime::parse(treated);
        const auto r0 = TreatmentRegime::parse(reference);

        if (*sim) {
            const auto spec = make_scenario(scenario, n, sets);
            auto rs = stream_for(seed, "simulate");
            auto d = simulate(spec, rs);
            if (drop_latent) d = d.without_latent();
            std::ostringstream os;
            write_csv(os, d);
            emit(os.str(), out);
        } else if (*ora) {
            const auto spec = make_scenario(scenario, n, sets);
            OracleMode m = spec.all_binary() ? OracleMode::ExactEnumeration : OracleMode::MonteCarlo;
            if (mode == "exact") m = OracleMode::ExactEnumeration;
            if (mode == "mc") m = OracleMode::MonteCarlo;
            auto ts = stream_for(seed, "truth");
            const auto res = true_ate(spec, r1, r0, m, draws, &ts);
            json j;
            j["scenario"] = scenario_name(spec.scenario);
            j["method"] = m == OracleMode::ExactEnumeration ? "exact" : "mc";
            j["true_ate"] = num(res.true_ate);
            j["apo_treated"] = num(res.apo_treated);
            j["apo_reference"] = num(res.apo_reference);
            j["mc_draws"] = res.mc_draws;
            j["mc_se"] = num(res.mc_standard_error);
            if (!table_out.empty()) {
                auto tsr = stream_for(seed, "sf-table");
                const auto table = true_sensitivity_table(spec, m, std::min<std::uint64_t>(draws, 1'000'000), &tsr);
                emit(table.to_csv(), table_out);
                j["table_cells"] = table.cells.size();
            }
            emit_json(j, out);
        } else if (*cor) {
            const auto d = load(in, false);
            const auto c = correct_with_models(d, parse_sf(sf_text, probability, d), fit_treatment_models(d));
            std::ostringstream os;
            write_csv(os, d, {{"y_sf", c.y_sf}});
            emit(os.str(), out);
        } else if (*msm) {
            const auto d = load(in, include_u);
            const auto models = fit_treatment_models(d, include_u);
            const auto w = compute_weights(d, models);
            std::vector<double> y(d.outcomes().begin(), d.outcomes().end());
            json j;
            if (!sf_text.empty()) {
                if (include_u) throw InvalidInput("--sf cannot be combined with --include-u");
                const auto sf = parse_sf(sf_text, probability, d);
                y = correct_with_models(d, sf, models).y_sf;
                j["sf"] = sf.describe();
            }
            MsmConfig cfg;
            cfg.form = parse_form(marginal);
            cfg.bootstrap = boot;
            cfg.treated = r1;
            cfg.reference = r0;
            const auto r = fit_msm(d, y, w, cfg, stream_for(seed, "msm"));
            json theta;
            for (std::size_t k = 0; k < r.theta.names.size(); ++k) {
                theta[r.theta.names[k]] = num(r.theta.coefficients[static_cast<Eigen::Index>(k)]);
            }
            j["theta"] = theta;
            j["ate"] = num(r.ate);
            j["se"] = num(r.se);
            j["ci95"] = pair_json(r.ci95);
            j["weights"] = weight_json(r.weights);
            j["bootstrap"] = boot;
            j["bootstrap_failures"] = r.bootstrap_failures;
            emit_json(j, out);
        } else if (*bm) {
            const auto d = load(in, false);
            BmsmConfig cfg;
            cfg.B = B;
            cfg.form = parse_form(marginal);
            cfg.treated = r1;
            cfg.reference = r0;
            cfg.posterior_draws = posterior_draws;
            if (weight_mode == "posterior") {
                cfg.weight_mode = WeightMode::PosteriorMean;
            } else if (weight_mode != "plugin") {
                throw InvalidInput("--weights expects plugin or posterior");
            }
            const auto models = fit_treatment_models(d);
            std::vector<double> y(d.outcomes().begin(), d.outcomes().end());
            json j;
            if (!sf_text.empty()) {
                const auto sf = parse_sf(sf_text, probability, d);
                y = correct_with_models(d, sf, models).y_sf;
                j["sf"] = sf.describe();
            }
            auto ws = stream_for(seed, "bmsm-weights");
            const auto w = bmsm_weights(d, cfg, ws);
            const auto post = fit_bmsm(d, y, w, cfg, stream_for(seed, "bmsm"));
            j["point"] = num(post.point);
            j["mean"] = num(post.mean);
            j["sd"] = num(post.sd);
            j["ci95"] = pair_json(post.ci95);
            j["B"] = B;
            j["skipped"] = post.skipped;
            j["weights"] = weight_json(w.summary());
            emit_json(j, out);
        } else if (*bs) {
            const auto d = load(in, false);
            PriorConfig pc;
            if (priors == "application") {
                pc = PriorConfig::application();
            } else if (priors != "simulation") {
                throw InvalidInput("--priors expects simulation or application");
            }
            const auto model = build_model(d.visits(), d.covariates_per_visit(), parse_u_structure(ustruct), pc);
            BsaConfig cfg;
            cfg.chain = chain;
            cfg.mc_paths = mc_paths;
            cfg.treated = r1;
            cfg.reference = r0;
            const auto post = run_bsa(model, d, cfg, stream_for(seed, "bsa"));
            json j;
            j["u"] = ustruct;
            j["ate"] = {{"mean", num(post.mean)}, {"sd", num(post.sd)}, {"ci95", pair_json(post.ci95)}};
            double at = 0.0, ar = 0.0;
            for (std::size_t s = 0; s < post.ate_draws.size(); ++s) {
                at += post.apo_treated[s];
                ar += post.apo_reference[s];
            }
            const double S = static_cast<double>(post.ate_draws.size());
            j["apo"] = {{"treated", num(at / S)}, {"reference", num(ar / S)}};
            j["draws"] = post.ate_draws.size();
            json g;
            for (const auto& [name, z] : post.geweke) g[name] = num(z);
            j["geweke"] = g;
            json acc;
            for (const auto& [name, r] : post.chain.acceptance) acc[name] = num(r);
            j["acceptance_rates"] = acc;
            j["warnings"] = post.chain.warnings;
            if (!chain_out.empty()) {
                std::ostringstream os;
                for (std::size_t c = 0; c < post.chain.names.size(); ++c) os << post.chain.names[c] << ',';
                os << "precision,ate\n";
                for (Eigen::Index s = 0; s < post.chain.draws.rows(); ++s) {
                    for (Eigen::Index c = 0; c < post.chain.draws.cols(); ++c) {
                        os << format_double(post.chain.draws(s, c)) << ',';
                    }
                    os << format_double(post.chain.precision[static_cast<std::size_t>(s)]) << ','
                       << format_double(post.ate_draws[static_cast<std::size_t>(s)]) << '\n';
                }
                emit(os.str(), chain_out);
            }
            emit_json(j, out);
        } else if (*rep) {
            StudyConfig cfg;
            cfg.scenario = make_scenario(scenario, n, sets);
            cfg.ns = ns;
            cfg.estimators = parse_estimator_list(estimators);
            cfg.seed = seed;
            cfg.jobs = jobs;
            cfg.truth_mc_draws = truth_draws;
            cfg.table_mc_draws = table_draws;
            cfg.msm.bootstrap = boot;
            cfg.bmsm.B = B;
            cfg.sf_probability = probability == "oracle" ? ProbabilitySource::OracleTable : ProbabilitySource::FittedModels;
            if (paper_scale) cfg.bsa = StudyConfig::full_length_bsa();
            const auto report = run_study(cfg);
            ReportFormat f = ReportFormat::Csv;
            if (format == "markdown") {
                f = ReportFormat::Markdown;
            } else if (format != "csv") {
                throw InvalidInput("--format expects csv or markdown");
            }
            if (!records_out.empty()) emit(render_records_csv(report), records_out);
            emit(render_report(report, f), out);
            std::cerr << "true ATE " << format_double(report.true_ate) << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
