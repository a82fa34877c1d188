#include "longconf/msm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longconf/error.hpp"

namespace longconf {

namespace {

std::string x_name(std::size_t j, std::size_t k, std::size_t p) {
    return p == 1 ? "x" + std::to_string(j + 1) : "x" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
}

std::string u_name(std::size_t j, std::size_t m, std::size_t count) {
    return count == 1 ? "u" + std::to_string(j + 1) : "u" + std::to_string(j + 1) + "_" + std::to_string(m + 1);
}

std::vector<double> treatment_column(const LongitudinalDataset& d, std::size_t j) {
    std::vector<double> y(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) y[i] = d.a(i, j);
    return y;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

DesignMatrix treatment_design(const LongitudinalDataset& data, std::size_t j, bool covariates, bool include_u) {
    const std::size_t n = data.n(), p = data.covariates_per_visit();
    std::vector<std::string> names{"(Intercept)"};
    for (std::size_t q = 0; q < j; ++q) names.push_back("a" + std::to_string(q + 1));
    if (covariates) {
        for (std::size_t q = 0; q <= j; ++q) {
            for (std::size_t k = 0; k < p; ++k) names.push_back(x_name(q, k, p));
        }
    }
    if (include_u) {
        for (std::size_t q = 0; q <= j; ++q) {
            for (std::size_t m = 0; m < data.latent_count(q); ++m) names.push_back(u_name(q, m, data.latent_count(q)));
        }
    }
    Eigen::MatrixXd M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index c = 0;
        M(r, c++) = 1.0;
        for (std::size_t q = 0; q < j; ++q) M(r, c++) = data.a(i, q);
        if (covariates) {
            for (std::size_t q = 0; q <= j; ++q) {
                for (std::size_t k = 0; k < p; ++k) M(r, c++) = data.x(i, q, k);
            }
        }
        if (include_u) {
            for (std::size_t q = 0; q <= j; ++q) {
                for (std::size_t m = 0; m < data.latent_count(q); ++m) M(r, c++) = data.u(i, q, m);
            }
        }
    }
    return DesignMatrix(std::move(names), std::move(M));
}

TreatmentModels fit_treatment_models(const LongitudinalDataset& data, bool include_u) {
    if (include_u && !data.has_latent()) {
        throw InvalidInput("fit_treatment_models: include_u requested but the data carry no latent columns");
    }
    if (!include_u) data.require_no_latent("fit_treatment_models (pass include_u for the U-included benchmark)");
    TreatmentModels m;
    m.include_u = include_u;
    for (std::size_t j = 0; j < data.visits(); ++j) {
        const auto y = treatment_column(data, j);
        m.numerator.push_back(fit_logistic(treatment_design(data, j, false, false), y));
        m.denominator.push_back(fit_logistic(treatment_design(data, j, true, include_u), y));
    }
    return m;
}

namespace {

Eigen::MatrixXd probabilities(const LongitudinalDataset& data, const std::vector<GlmFit>& fits, bool covariates,
                              bool include_u) {
    if (fits.size() != data.visits()) throw InvalidInput("treatment models do not cover every visit");
    Eigen::MatrixXd P(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(data.visits()));
    for (std::size_t j = 0; j < data.visits(); ++j) {
        P.col(static_cast<Eigen::Index>(j)) = predict_prob(fits[j], treatment_design(data, j, covariates, include_u));
    }
    return P;
}

}  // namespace

Eigen::MatrixXd denominator_probabilities(const LongitudinalDataset& data, const TreatmentModels& models) {
    return probabilities(data, models.denominator, true, models.include_u);
}

Eigen::MatrixXd numerator_probabilities(const LongitudinalDataset& data, const TreatmentModels& models) {
    return probabilities(data, models.numerator, false, false);
}

CorrectedDataset correct_with_models(const LongitudinalDataset& data, const SensitivityFunctionSpec& spec,
                                     const TreatmentModels& models) {
    const bool oracle = spec.probability_source == ProbabilitySource::OracleTable;
    if (oracle && !spec.table) throw InvalidInput("oracle probabilities need a sensitivity table");
    return correct_outcomes(data, spec,
                            oracle ? oracle_treatment_probabilities(data, *spec.table)
                                   : denominator_probabilities(data, models));
}

WeightSummary WeightVector::summary() const {
    if (w.empty()) return {};
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    return {*lo, std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size()), *hi};
}

WeightVector weights_from_probabilities(const LongitudinalDataset& data, const Eigen::MatrixXd& num,
                                        const Eigen::MatrixXd& den,
                                        std::optional<std::pair<double, double>> truncation) {
    const std::size_t n = data.n(), J = data.visits();
    WeightVector out;
    out.w.resize(n);
    out.truncation = truncation;
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1.0;
        for (std::size_t j = 0; j < J; ++j) {
            const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
            const int a = data.a(i, j);
            const double pn = a ? num(r, c) : 1.0 - num(r, c);
            const double pd = a ? den(r, c) : 1.0 - den(r, c);
            if (pd < 1e-12) {
                throw FitError("compute_weights: denominator probability below 1e-12 for subject " +
                               std::to_string(i + 1) + " at visit " + std::to_string(j + 1));
            }
            w *= pn / pd;
        }
        out.w[i] = w;
    }
    if (truncation && n > 0) {
        const double lo = percentile(out.w, truncation->first);
        const double hi = percentile(out.w, truncation->second);
        for (auto& w : out.w) w = std::clamp(w, lo, hi);
    }
    return out;
}

WeightVector compute_weights(const LongitudinalDataset& data, const TreatmentModels& models,
                             std::optional<std::pair<double, double>> truncation) {
    return weights_from_probabilities(data, numerator_probabilities(data, models),
                                      denominator_probabilities(data, models), truncation);
}

DesignMatrix marginal_design(const LongitudinalDataset& data, MarginalForm form) {
    const std::size_t n = data.n(), J = data.visits();
    if (form == MarginalForm::CumulativeDose) {
        Eigen::MatrixXd M(static_cast<Eigen::Index>(n), 2);
        for (std::size_t i = 0; i < n; ++i) {
            int dose = 0;
            for (std::size_t j = 0; j < J; ++j) dose += data.a(i, j);
            M(static_cast<Eigen::Index>(i), 0) = 1.0;
            M(static_cast<Eigen::Index>(i), 1) = dose;
        }
        return DesignMatrix({"(Intercept)", "dose"}, std::move(M));
    }
    const std::size_t cells = std::size_t{1} << J;
    std::vector<std::string> names;
    for (std::size_t s = 0; s < cells; ++s) {
        std::string bits;
        for (std::size_t j = J; j-- > 0;) bits.push_back(((s >> j) & 1U) ? '1' : '0');
        names.push_back("seq" + bits);
    }
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cells));
    std::vector<std::size_t> count(cells, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t s = 0;
        for (std::size_t j = 0; j < J; ++j) s = (s << 1U) | static_cast<std::size_t>(data.a(i, j));
        M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = 1.0;
        ++count[s];
    }
    for (std::size_t s = 0; s < cells; ++s) {
        if (count[s] == 0) {
            throw InvalidInput("saturated MSM: treatment sequence " + names[s].substr(3) + " is not observed");
        }
    }
    return DesignMatrix(std::move(names), std::move(M));
}

Eigen::RowVectorXd marginal_row(const DesignMatrix& design, const TreatmentRegime& r, MarginalForm form) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(design.cols());
    if (form == MarginalForm::CumulativeDose) {
        row << 1.0, cumulative_dose(r);
        return row;
    }
    const std::string name = "seq" + r.to_string();
    for (std::size_t c = 0; c < design.names.size(); ++c) {
        if (design.names[c] == name) row[static_cast<Eigen::Index>(c)] = 1.0;
    }
    return row;
}

double msm_ate(const LongitudinalDataset& data, std::span<const double> y, std::span<const double> w,
               const MsmConfig& cfg, GlmFit* theta) {
    if (y.size() != data.n() || w.size() != data.n()) throw InvalidInput("fit_msm: outcome/weights not aligned");
    const auto X = marginal_design(data, cfg.form);
    auto fit = fit_linear(X, y, w);
    const double ate = (marginal_row(X, cfg.treated, cfg.form) - marginal_row(X, cfg.reference, cfg.form))
                           .dot(fit.coefficients);
    if (theta) *theta = std::move(fit);
    return ate;
}

MsmResult fit_msm(const LongitudinalDataset& data, std::span<const double> y, const WeightVector& weights,
                  const MsmConfig& cfg, const RandomStream& stream) {
    MsmResult res;
    res.ate = msm_ate(data, y, weights.w, cfg, &res.theta);
    res.weights = weights.summary();
    const std::size_t n = data.n();
    std::vector<double> boots;
    std::vector<std::size_t> idx(n);
    std::vector<double> yb(n), wb(n);
    for (int b = 0; b < cfg.bootstrap; ++b) {
        auto rs = stream.derive("boot", static_cast<std::uint64_t>(b));
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = static_cast<std::size_t>(rs.below(n));
            yb[i] = y[idx[i]];
            wb[i] = weights.w[idx[i]];
        }
        try {
            boots.push_back(msm_ate(data.select(idx), yb, wb, cfg));
        } catch (const Error&) {
            ++res.bootstrap_failures;
        }
    }
    if (cfg.bootstrap > 0 && res.bootstrap_failures * 20 > cfg.bootstrap) {
        throw FitError("fit_msm: more than 5% of bootstrap resamples failed");
    }
    if (boots.size() >= 2) {
        const double m = std::accumulate(boots.begin(), boots.end(), 0.0) / static_cast<double>(boots.size());
        double ss = 0.0;
        for (double v : boots) ss += (v - m) * (v - m);
        res.se = std::sqrt(ss / static_cast<double>(boots.size() - 1));
    }
    res.ci95 = {res.ate - 1.96 * res.se, res.ate + 1.96 * res.se};
    return res;
}

}  // namespace longconf
