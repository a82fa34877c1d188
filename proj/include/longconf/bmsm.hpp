#pragma once

#include <span>
#include <string>
#include <vector>

#include "longconf/msm.hpp"
#include "longconf/random.hpp"

namespace longconf {

/// n-point Dirichlet(1, ..., 1) draw via normalized Exp(1) variates.
std::vector<double> draw_dirichlet(std::size_t n, RandomStream& stream);

enum class WeightMode { PluginML, PosteriorMean };

struct BmsmConfig {
    int B = 1000;
    MarginalForm form = MarginalForm::CumulativeDose;
    WeightMode weight_mode = WeightMode::PluginML;
    int posterior_draws = 1000;  // PosteriorMean only
    TreatmentRegime treated = TreatmentRegime::parse("111");
    TreatmentRegime reference = TreatmentRegime::parse("000");
};

struct BmsmPosterior {
    std::vector<Eigen::VectorXd> theta_draws;
    std::vector<double> ate_draws;
    double point = 0.0;  // pi_i = 1/n
    double mean = 0.0;
    double sd = 0.0;
    std::pair<double, double> ci95{0.0, 0.0};
    int skipped = 0;
    std::vector<std::string> warnings;
};

/// Stabilized weights with each visit's P(a_ij | history) averaged over posterior
/// draws of the numerator and denominator treatment models.
WeightVector posterior_mean_weights(const LongitudinalDataset& data, int draws, RandomStream& stream);

/// Importance weights for the configured mode. PluginML uses the maximum-likelihood treatment models.
WeightVector bmsm_weights(const LongitudinalDataset& data, const BmsmConfig& cfg, RandomStream& stream);

/// Bayesian-bootstrap MSM: draw b maximizes the pi^(b) w-weighted Gaussian
/// log-likelihood, i.e. weighted least squares with weights pi_i w_i; pi^(b)
/// comes from stream.derive("dirichlet", b). Degenerate draws are skipped with
/// a warning; more than 5% skipped throws FitError.
BmsmPosterior fit_bmsm(const LongitudinalDataset& data, std::span<const double> y, const WeightVector& weights,
                       const BmsmConfig& cfg, const RandomStream& stream);

/// Equal-tailed percentile (linear interpolation, type 7).
double quantile(std::vector<double> v, double q);

}  // namespace longconf
