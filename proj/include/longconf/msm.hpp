#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "longconf/dataset.hpp"
#include "longconf/glm.hpp"
#include "longconf/random.hpp"
#include "longconf/sensitivity.hpp"

namespace longconf {

/// Per-visit logistic treatment models. Numerators condition on a_bar_{j-1};
/// denominators on a_bar_{j-1}, x_bar_j and, for the U-included benchmark, the latent history.
struct TreatmentModels {
    std::vector<GlmFit> numerator;
    std::vector<GlmFit> denominator;
    bool include_u = false;
};

/// Design for the visit-j (0-based) treatment model.
DesignMatrix treatment_design(const LongitudinalDataset& data, std::size_t j, bool covariates, bool include_u);

TreatmentModels fit_treatment_models(const LongitudinalDataset& data, bool include_u = false);

/// n x J matrix of fitted P(A_j = 1 | history) from the denominator models.
Eigen::MatrixXd denominator_probabilities(const LongitudinalDataset& data, const TreatmentModels& models);
Eigen::MatrixXd numerator_probabilities(const LongitudinalDataset& data, const TreatmentModels& models);

/// correct_outcomes with P(A_j = 1 | history) from the spec's probability source:
/// the fitted denominator models, or the oracle table's stored probabilities.
CorrectedDataset correct_with_models(const LongitudinalDataset& data, const SensitivityFunctionSpec& spec,
                                     const TreatmentModels& models);

struct WeightSummary {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

struct WeightVector {
    std::vector<double> w;
    bool stabilized = true;
    std::optional<std::pair<double, double>> truncation;  // percentiles

    WeightSummary summary() const;
};

/// w_i = prod_j P_num(a_ij) / P_den(a_ij) from n x J probabilities of treatment.
/// Throws FitError when a denominator probability of the observed treatment falls below 1e-12.
WeightVector weights_from_probabilities(const LongitudinalDataset& data, const Eigen::MatrixXd& num,
                                        const Eigen::MatrixXd& den,
                                        std::optional<std::pair<double, double>> truncation = std::nullopt);

WeightVector compute_weights(const LongitudinalDataset& data, const TreatmentModels& models,
                             std::optional<std::pair<double, double>> truncation = std::nullopt);

enum class MarginalForm { CumulativeDose, Saturated };

/// Marginal design over the regime only: (1, dose) or one indicator per treatment sequence.
/// Saturated throws InvalidInput naming any sequence that is absent from the data.
DesignMatrix marginal_design(const LongitudinalDataset& data, MarginalForm form);

/// Row of the marginal design for a regime, aligned with marginal_design's columns.
Eigen::RowVectorXd marginal_row(const DesignMatrix& design, const TreatmentRegime& r, MarginalForm form);

struct MsmConfig {
    MarginalForm form = MarginalForm::CumulativeDose;
    int bootstrap = 200;
    TreatmentRegime treated = TreatmentRegime::parse("111");
    TreatmentRegime reference = TreatmentRegime::parse("000");
};

struct MsmResult {
    GlmFit theta;
    double ate = 0.0;
    double se = 0.0;
    std::pair<double, double> ci95{0.0, 0.0};
    WeightSummary weights;
    int bootstrap_failures = 0;
};

/// Weighted least squares of `y` (raw or corrected) on the marginal design.
/// Standard error by nonparametric bootstrap over subjects with the weights
/// held fixed; resample b draws from stream.derive("boot", b).
MsmResult fit_msm(const LongitudinalDataset& data, std::span<const double> y, const WeightVector& weights,
                  const MsmConfig& cfg, const RandomStream& stream);

/// Point estimate only (no bootstrap).
double msm_ate(const LongitudinalDataset& data, std::span<const double> y, std::span<const double> w,
               const MsmConfig& cfg, GlmFit* theta = nullptr);

}  // namespace longconf
