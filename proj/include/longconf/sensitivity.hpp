#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longconf/dataset.hpp"
#include "longconf/dgp.hpp"

namespace longconf {

enum class SfKind { Zero, ConstantPerVisit, OracleTable, ResidualBand };

/// Where P(A_j = 1 - a_j | history) comes from when correcting outcomes.
enum class ProbabilitySource { FittedModels, OracleTable };

/// Rule producing c(j, a_bar, x_bar_j).
struct SensitivityFunctionSpec {
    SfKind kind = SfKind::Zero;
    std::vector<double> constants;  // ConstantPerVisit, one per visit
    std::shared_ptr<const SensitivityTable> table;
    double h = 1.0;
    double sigma_hat = 0.0;
    int sign = 1;
    ProbabilitySource probability_source = ProbabilitySource::FittedModels;

    static SensitivityFunctionSpec zero();
    static SensitivityFunctionSpec constant(std::vector<double> per_visit);
    static SensitivityFunctionSpec oracle(SensitivityTable table,
                                          ProbabilitySource source = ProbabilitySource::FittedModels);
    static SensitivityFunctionSpec band(double h, double sigma_hat, int sign = 1);

    /// "zero", "const:c1,c2,c3", "band:h" or "band:-h". Oracle specs are built from a table file.
    std::string describe() const;
};

/// c for visit j (1-based) given the subject's full treatment vector and its
/// covariate history (at least p * j entries, visit-major).
double eval_c(const SensitivityFunctionSpec& spec, std::size_t j, std::span<const int> a_bar,
              std::span<const int> x_bar);

struct CorrectedDataset {
    LongitudinalDataset base;
    std::vector<double> y_sf;
    std::vector<double> correction;
};

/// y_sf_i = y_i - sum_j c(j, a_i, x_i) * P(A_j = 1 - a_ij | a_i,j-1, x_i,j).
/// treat_prob(i, j) holds P(A_j = 1 | history) for subject i at visit j.
CorrectedDataset correct_outcomes(const LongitudinalDataset& data, const SensitivityFunctionSpec& spec,
                                  const Eigen::MatrixXd& treat_prob);

/// P(A_j = 1 | a_bar_{j-1}, x_bar_j) per subject-visit from the table's stored cell probabilities.
Eigen::MatrixXd oracle_treatment_probabilities(const LongitudinalDataset& data, const SensitivityTable& table);

/// Parses "zero", "const:c1,c2,...", "oracle:<table.csv>" or "band:<h>" (negative h flips the
/// sign; sigma_hat is outcome_residual_sd(data)). OracleTable probabilities need an oracle spec.
SensitivityFunctionSpec parse_sensitivity(const std::string& text, const LongitudinalDataset& data,
                                          ProbabilitySource source = ProbabilitySource::FittedModels);

/// Residual SD of the linear outcome model y ~ 1 + a_1..a_J + x_bar_J.
double outcome_residual_sd(const LongitudinalDataset& data);

}  // namespace longconf
