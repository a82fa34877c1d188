#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "longconf/bmsm.hpp"
#include "longconf/bsa.hpp"
#include "longconf/dgp.hpp"
#include "longconf/error.hpp"
#include "longconf/mcmc.hpp"
#include "longconf/msm.hpp"
#include "longconf/replication.hpp"
#include "longconf/sensitivity.hpp"

namespace py = pybind11;
using namespace longconf;

namespace {

RandomStream stream_for(std::uint64_t seed, const char* label) { return derive_stream(SeedSpec{seed, {}}, label, 0); }

ProbabilitySource source_of(const std::string& s) {
    if (s == "oracle") return ProbabilitySource::OracleTable;
    if (s == "fitted") return ProbabilitySource::FittedModels;
    throw InvalidInput("probability must be 'fitted' or 'oracle'");
}

Eigen::MatrixXi int_matrix(const LongitudinalDataset& d, bool treat) {
    const std::size_t cols = treat ? d.visits() : d.visits() * d.covariates_per_visit();
    Eigen::MatrixXi m(static_cast<Eigen::Index>(d.n()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto row = treat ? d.treatments(i) : d.covariates(i);
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    return m;
}

std::vector<double> outcomes_for(const LongitudinalDataset& d, const std::string& sf, const std::string& probability,
                                 const TreatmentModels& models) {
    if (sf.empty()) return {d.outcomes().begin(), d.outcomes().end()};
    return correct_with_models(d, parse_sensitivity(sf, d, source_of(probability)), models).y_sf;
}

}  // namespace

PYBIND11_MODULE(_longconf, m) {
    m.doc() = "Longitudinal causal estimators under unmeasured time-varying confounding";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
    py::register_exception<UnavailableCell>(m, "UnavailableCell", PyExc_KeyError);

    py::class_<LongitudinalDataset>(m, "Dataset")
        .def_property_readonly("n", &LongitudinalDataset::n)
        .def_property_readonly("visits", &LongitudinalDataset::visits)
        .def_property_readonly("has_latent", &LongitudinalDataset::has_latent)
        .def_property_readonly("x", [](const LongitudinalDataset& d) { return int_matrix(d, false); })
        .def_property_readonly("a", [](const LongitudinalDataset& d) { return int_matrix(d, true); })
        .def_property_readonly("y", [](const LongitudinalDataset& d) {
            return std::vector<double>(d.outcomes().begin(), d.outcomes().end());
        })
        .def("without_latent", &LongitudinalDataset::without_latent)
        .def("to_csv", [](const LongitudinalDataset& d, const std::string& path) { write_csv_file(path, d); })
        .def_static("from_csv", &read_csv_file);

    m.def(
        "simulate",
        [](const std::string& scenario, std::size_t n, std::uint64_t seed) {
            auto rs = stream_for(seed, "simulate");
            return simulate(ScenarioSpec::defaults(parse_scenario(scenario), n), rs);
        },
        py::arg("scenario") = "tv-binary-u", py::arg("n") = 500, py::arg("seed") = 7);

    m.def(
        "true_ate",
        [](const std::string& scenario, const std::string& mode, std::uint64_t draws, std::uint64_t seed) {
            const auto spec = ScenarioSpec::defaults(parse_scenario(scenario));
            OracleMode om = spec.all_binary() ? OracleMode::ExactEnumeration : OracleMode::MonteCarlo;
            if (mode == "exact") om = OracleMode::ExactEnumeration;
            if (mode == "mc") om = OracleMode::MonteCarlo;
            auto rs = stream_for(seed, "truth");
            const auto r = true_ate(spec, TreatmentRegime::parse("111"), TreatmentRegime::parse("000"), om, draws, &rs);
            return py::dict(py::arg("true_ate") = r.true_ate, py::arg("apo_treated") = r.apo_treated,
                            py::arg("apo_reference") = r.apo_reference, py::arg("mc_se") = r.mc_standard_error);
        },
        py::arg("scenario") = "tv-binary-u", py::arg("mode") = "auto", py::arg("draws") = 1'000'000,
        py::arg("seed") = 7);

    m.def(
        "sensitivity_table_csv",
        [](const std::string& scenario) {
            const auto spec = ScenarioSpec::defaults(parse_scenario(scenario));
            if (!spec.all_binary()) throw InvalidInput("sensitivity_table_csv: exact tables need an all-binary scenario");
            return true_sensitivity_table(spec, OracleMode::ExactEnumeration).to_csv();
        },
        py::arg("scenario") = "tv-binary-u");

    m.def(
        "msm",
        [](const LongitudinalDataset& d, bool include_u, const std::string& sf, const std::string& probability,
           int boot, std::uint64_t seed) {
            const auto data = include_u ? d : d.without_latent();
            const auto models = fit_treatment_models(data, include_u);
            const auto y = outcomes_for(data, sf, probability, models);
            MsmConfig cfg;
            cfg.bootstrap = boot;
            const auto r = fit_msm(data, y, compute_weights(data, models), cfg, stream_for(seed, "msm"));
            return py::dict(py::arg("ate") = r.ate, py::arg("se") = r.se, py::arg("ci95") = r.ci95,
                            py::arg("weights_mean") = r.weights.mean);
        },
        py::arg("data"), py::arg("include_u") = false, py::arg("sf") = "", py::arg("probability") = "fitted",
        py::arg("boot") = 200, py::arg("seed") = 7);

    m.def(
        "bmsm",
        [](const LongitudinalDataset& d, const std::string& sf, const std::string& probability, int B,
           std::uint64_t seed) {
            const auto data = d.without_latent();
            const auto models = fit_treatment_models(data);
            const auto y = outcomes_for(data, sf, probability, models);
            BmsmConfig cfg;
            cfg.B = B;
            const auto post = fit_bmsm(data, y, compute_weights(data, models), cfg, stream_for(seed, "bmsm"));
            return py::dict(py::arg("point") = post.point, py::arg("mean") = post.mean, py::arg("sd") = post.sd,
                            py::arg("ci95") = post.ci95, py::arg("draws") = post.ate_draws);
        },
        py::arg("data"), py::arg("sf") = "", py::arg("probability") = "fitted", py::arg("B") = 1000,
        py::arg("seed") = 7);

    m.def(
        "bsa",
        [](const LongitudinalDataset& d, const std::string& u, int burnin, int keep, int thin, std::size_t mc_paths,
           std::uint64_t seed) {
            const auto data = d.without_latent();
            const auto model = build_model(data.visits(), data.covariates_per_visit(), parse_u_structure(u));
            BsaConfig cfg;
            cfg.chain.burn_in = burnin;
            cfg.chain.kept_iterations = keep;
            cfg.chain.thin = thin;
            cfg.mc_paths = mc_paths;
            const auto post = run_bsa(model, data, cfg, stream_for(seed, "bsa"));
            return py::dict(py::arg("mean") = post.mean, py::arg("sd") = post.sd, py::arg("ci95") = post.ci95,
                            py::arg("draws") = post.ate_draws, py::arg("geweke") = post.geweke);
        },
        py::arg("data"), py::arg("u") = "time-varying", py::arg("burnin") = 2000, py::arg("keep") = 2000,
        py::arg("thin") = 2, py::arg("mc_paths") = 0, py::arg("seed") = 7);

    m.def(
        "replicate",
        [](const std::string& scenario, std::size_t n, int ns, const std::string& estimators, std::uint64_t seed,
           unsigned jobs, int boot, int B) {
            StudyConfig cfg;
            cfg.scenario = ScenarioSpec::defaults(parse_scenario(scenario), n);
            cfg.ns = ns;
            cfg.estimators = parse_estimator_list(estimators);
            cfg.seed = seed;
            cfg.jobs = jobs;
            cfg.msm.bootstrap = boot;
            cfg.bmsm.B = B;
            const auto rep = [&] {
                py::gil_scoped_release release;
                return run_study(cfg);
            }();
            py::list rows;
            for (const auto& r : rep.rows) {
                rows.append(py::dict(py::arg("estimator") = r.estimator, py::arg("mean") = r.mean,
                                     py::arg("rb") = r.rb, py::arg("ese") = r.ese, py::arg("ase") = r.ase,
                                     py::arg("cp") = r.cp, py::arg("valid") = r.valid));
            }
            return py::dict(py::arg("true_ate") = rep.true_ate, py::arg("rows") = rows,
                            py::arg("csv") = render_report(rep, ReportFormat::Csv));
        },
        py::arg("scenario") = "tv-binary-u", py::arg("n") = 500, py::arg("ns") = 10,
        py::arg("estimators") = "msm-x,msm-u", py::arg("seed") = 7, py::arg("jobs") = 1, py::arg("boot") = 200,
        py::arg("B") = 1000);

    m.def(
        "geweke_z",
        [](const std::vector<double>& chain, double first, double last) { return geweke_z(chain, first, last); },
        py::arg("chain"), py::arg("first") = 0.1, py::arg("last") = 0.5);
}
