#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace longconf {

/// Named-column real design matrix.
struct DesignMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    DesignMatrix() = default;
    DesignMatrix(std::vector<std::string> column_names, Eigen::MatrixXd v);

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }

    /// Throws InvalidInput on non-finite entries, duplicate names or a name/column mismatch.
    void validate() const;
};

struct GlmFit {
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    /// Inverse observed information (logistic) or sigma^2 (X'WX)^-1 (linear).
    Eigen::MatrixXd covariance;
    bool converged = false;
    int iterations = 0;
    double residual_sd = 0.0;  // linear only
    double log_likelihood = 0.0;
    /// Log-likelihood after each Newton iterate, starting from beta = 0 (logistic only).
    std::vector<double> trace;

    double coef(const std::string& name) const;
    double se(const std::string& name) const;
};

struct LogisticOptions {
    double tol = 1e-8;
    int max_iter = 100;
    double divergence_bound = 30.0;
};

/// Weighted Bernoulli maximum likelihood by Newton-Raphson (IRLS) with step
/// halving. Converged means max |score| < tol or Newton decrement < tol. Throws FitError on separation
/// (a coefficient leaves [-divergence_bound, divergence_bound]), rank
/// deficiency, or failure to converge within max_iter.
GlmFit fit_logistic(const DesignMatrix& X, std::span<const double> y,
                    std::span<const double> weights = {}, const LogisticOptions& opt = {});

/// Weighted least squares through a column-pivoted QR. Requires sum(w) > p.
GlmFit fit_linear(const DesignMatrix& X, std::span<const double> y,
                  std::span<const double> weights = {});

/// logit^-1(X beta); columns must match the fit by name and order.
Eigen::VectorXd predict_prob(const GlmFit& fit, const DesignMatrix& X);

/// Weighted Bernoulli log-likelihood and score at beta.
double logistic_log_likelihood(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta);

inline double inv_logit(double eta) {
    return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

/// log(1 + exp(eta)) without overflow.
inline double log1p_exp(double eta) {
    return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

}  // namespace longconf
