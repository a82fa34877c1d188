#pragma once

#include <span>

#include <Eigen/Dense>

#include "longconf/glm.hpp"
#include "longconf/random.hpp"

namespace longconf {

/// Random-walk proposal scale for one scalar, tuned by Robbins-Monro toward
/// a target acceptance rate while adaptation is on.
struct AdaptiveScale {
    double log_scale = std::log(0.5);
    double target = 0.44;
    long proposed = 0;
    long accepted = 0;

    double scale() const { return std::exp(log_scale); }
    void record(bool accept, long iteration, bool adapt);
    double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Geweke convergence Z: (mean_first - mean_last) / sqrt(S_first/n_first + S_last/n_last),
/// spectral density at zero from non-overlapping batch means. Throws InvalidInput for
/// segments shorter than 100 or a window with zero variance.
double geweke_z(std::span<const double> chain, double first_frac = 0.1, double last_frac = 0.5,
                int batches = 20);

struct LogisticPosteriorConfig {
    int burn_in = 1000;
    int draws = 1000;
    double prior_precision = 0.01;            // Normal(0, 1/precision) per coefficient
    double intercept_prior_precision = 0.001;
};

/// Draws from a logistic-regression posterior by adaptive single-site random-walk
/// Metropolis, started at the maximum-likelihood fit. Returns draws x p.
Eigen::MatrixXd sample_logistic_posterior(const DesignMatrix& X, std::span<const double> y,
                                          const LogisticPosteriorConfig& cfg, RandomStream& stream);

}  // namespace longconf
