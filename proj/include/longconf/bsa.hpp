#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "longconf/dataset.hpp"
#include "longconf/random.hpp"

namespace longconf {

enum class UStructure { TimeVarying, TimeInvariant };

UStructure parse_u_structure(const std::string& name);  // "time-varying" | "time-invariant"

struct CoefPrior {
    enum Kind { Normal, Uniform } kind = Normal;
    double precision = 0.01;  // Normal(0, 1/precision)
    double lo = 0.0, hi = 0.0;

    bool contains(double v) const { return kind == Normal || (v >= lo && v <= hi); }
    double log_density(double v) const;  // up to a constant; -inf outside uniform bounds
};

struct PriorConfig {
    double bias_lo = -2.0, bias_hi = 2.0;
    double u_intercept_lo = -5.0, u_intercept_hi = 5.0;
    double coef_precision = 0.01;
    double intercept_precision = 0.001;
    double precision_shape = 0.01;  // Gamma prior on the outcome precision
    double precision_rate = 0.01;

    static PriorConfig simulation();
    static PriorConfig application();
};

/// One structural equation: a Bernoulli-logit or Normal model for `response`
/// given `regressors` (variable indices; -1 is the intercept).
struct Equation {
    enum Kind { Logistic, Gaussian } kind = Logistic;
    std::string name;
    int response = 0;
    std::vector<int> regressors;
    std::vector<std::string> coef_names;
    std::vector<bool> bias;
    std::vector<CoefPrior> priors;
};

/// The joint model over (X, U, A, Y). Variables are indexed columns of a
/// per-subject row, listed in generation order.
struct BsaModel {
    UStructure u_structure = UStructure::TimeVarying;
    std::size_t visits = 0;
    std::size_t covariates_per_visit = 1;
    std::vector<std::string> var_names;
    std::vector<int> x_vars;       // visit-major, p per visit
    std::vector<int> a_vars;       // per visit
    std::vector<int> latent_vars;  // one per visit, or one in total for TimeInvariant
    int y_var = 0;
    std::vector<Equation> equations;  // topological order; the last one is the outcome model
    double precision_shape = 0.01;
    double precision_rate = 0.01;

    std::size_t parameter_count() const;
    /// "<equation>.<coefficient>" for every coefficient, in equation order.
    std::vector<std::string> parameter_names() const;
};

BsaModel build_model(std::size_t visits, std::size_t covariates_per_visit, UStructure u,
                     const PriorConfig& priors = PriorConfig::simulation());

/// Sampler state: coefficient vectors per equation, outcome precision, and
/// the n x (variable count) matrix of current values (latent columns imputed).
struct BsaState {
    std::vector<Eigen::VectorXd> coef;
    double precision = 1.0;
    Eigen::MatrixXd values;
};

/// Fills the observed columns of a state matrix from the data.
Eigen::MatrixXd observed_values(const BsaModel& model, const LongitudinalDataset& data);

/// log p(row | parameters) summed over every equation for one subject.
double joint_log_likelihood(const BsaModel& model, const BsaState& state, Eigen::Index i);

/// Log-odds of the full conditional of latent variable `latent` (index into latent_vars) for subject i.
double u_log_odds(const BsaModel& model, const BsaState& state, Eigen::Index i, std::size_t latent);

struct ChainConfig {
    int burn_in = 25000;
    int kept_iterations = 25000;
    int thin = 5;
    double initial_log_scale = -1.5;
};

struct RawChain {
    std::vector<std::string> names;
    Eigen::MatrixXd draws;            // kept x parameter_count
    std::vector<double> precision;    // kept
    Eigen::MatrixXd latent_mean;      // n x latent count, posterior mean of imputed U
    std::vector<std::pair<std::string, double>> acceptance;
    std::vector<std::string> warnings;
};

/// Metropolis-within-Gibbs: exact Gibbs for each binary U, adaptive single-site
/// random-walk Metropolis for coefficients (uniform bounds by rejection; the
/// outcome model's non-bias block is drawn jointly from its Gaussian conditional),
/// and a conjugate Gamma draw for the outcome precision.
RawChain run_chain(const BsaModel& model, const LongitudinalDataset& data, const ChainConfig& cfg,
                   RandomStream& stream);

/// Per-draw APO by forward simulation of mc_paths trajectories with treatments
/// clamped; trajectory randomness for draw s comes from stream.derive("gcomp", s),
/// so regimes evaluated with the same stream share random numbers.
std::vector<double> gcomp_apo(const RawChain& chain, const BsaModel& model, const TreatmentRegime& regime,
                              std::size_t mc_paths, const RandomStream& stream);

struct BsaPosterior {
    RawChain chain;
    std::vector<double> apo_treated, apo_reference, ate_draws;
    double mean = 0.0, sd = 0.0;
    std::pair<double, double> ci95{0.0, 0.0};
    std::vector<std::pair<std::string, double>> geweke;  // outcome coefficients and "ate"
};

struct BsaConfig {
    ChainConfig chain;
    std::size_t mc_paths = 0;  // 0 means n
    TreatmentRegime treated = TreatmentRegime::parse("111");
    TreatmentRegime reference = TreatmentRegime::parse("000");
};

BsaPosterior run_bsa(const BsaModel& model, const LongitudinalDataset& data, const BsaConfig& cfg,
                     const RandomStream& stream);

}  // namespace longconf
