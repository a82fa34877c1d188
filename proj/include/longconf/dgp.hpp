#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "longconf/dataset.hpp"
#include "longconf/random.hpp"

namespace longconf {

enum class Scenario { TvBinaryU, TvNormalU, TwoTvU, TiBinaryU, NoU };

/// "tv-binary-u", "tv-normal-u", "two-tv-u", "ti-binary-u", "no-u".
Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

enum class NodeRole { Covariate, Treatment, Latent, Outcome };

enum class NodeDist {
    Bernoulli,  // constant probability `prob`
    Logistic,   // Bernoulli(logit^-1(intercept + sum coef * parent))
    Normal,     // Normal(intercept + sum coef * parent, sd)
};

struct NodeTerm {
    std::string parent;
    double coef = 0.0;
};

/// One structural equation of a data-generating process.
struct DgpNode {
    std::string name;
    NodeRole role = NodeRole::Covariate;
    std::size_t visit = 0;  // zero-based
    std::size_t slot = 0;   // covariate or latent index within the visit
    NodeDist dist = NodeDist::Logistic;
    double prob = 0.5;
    double intercept = 0.0;
    double sd = 1.0;
    std::vector<NodeTerm> terms;
};

/// One of the five simulation designs with its full, overridable coefficient table.
struct ScenarioSpec {
    Scenario scenario = Scenario::TvBinaryU;
    std::size_t n = 500;
    std::vector<DgpNode> nodes;  // topological order

    static ScenarioSpec defaults(Scenario s, std::size_t n = 500);

    std::size_t visits() const;
    std::vector<std::size_t> latent_per_visit() const;
    bool all_binary() const;  // every non-outcome stochastic node is binary

    /// Parameter addressed as "<node>.<parent>", "<node>.intercept", "<node>.prob" or "<node>.sd".
    double coefficient(const std::string& key) const;
    void set_coefficient(const std::string& key, double value);

    /// One "node parameter value" line per parameter, in node order.
    std::string coefficient_table() const;
};

/// Draws n subjects sequentially from the structural equations. Latent
/// columns are emitted (oracle-only).
LongitudinalDataset simulate(const ScenarioSpec& spec, RandomStream& stream);

enum class OracleMode { ExactEnumeration, MonteCarlo };

struct OracleResult {
    double true_ate = 0.0;
    double apo_treated = 0.0;    // E[Y(first regime)]
    double apo_reference = 0.0;  // E[Y(second regime)]
    OracleMode method = OracleMode::ExactEnumeration;
    std::uint64_t mc_draws = 0;
    double mc_standard_error = 0.0;
};

/// E[Y(r1)] - E[Y(r0)] through the structural equations with treatments
/// clamped. Exact mode requires every stochastic node to be binary; Monte Carlo
/// mode uses common random numbers across the two regimes.
OracleResult true_ate(const ScenarioSpec& spec, const TreatmentRegime& r1, const TreatmentRegime& r0,
                      OracleMode mode, std::uint64_t mc_draws = 0, RandomStream* stream = nullptr);

/// Exact E[Y(r)] by enumeration; binary scenarios only.
double true_apo(const ScenarioSpec& spec, const TreatmentRegime& r);

/// Key of a sensitivity-function cell: visit j (1-based), the full regime a_bar
/// whose potential outcome is compared, and the covariate history x_bar_j
/// (p bits per visit, j visits).
struct SensitivityKey {
    std::size_t j = 1;
    std::string a_bar;
    std::string x_bar;
    auto operator<=>(const SensitivityKey&) const = default;
};

struct SensitivityCell {
    double c = 0.0;
    /// P(A_j = 1 | a_bar_{j-1}, x_bar_j) under the true process, latent confounders integrated out.
    double p_treat = 0.0;
    /// P(A_bar_{j-1} = a_bar_{j-1}, X_bar_j = x_bar_j).
    double mass = 0.0;
    double mc_standard_error = 0.0;
    bool available = true;
};

struct SensitivityTable {
    std::size_t visits = 0;
    std::size_t covariates_per_visit = 1;
    OracleMode method = OracleMode::ExactEnumeration;
    std::map<SensitivityKey, SensitivityCell> cells;

    /// Throws UnavailableCell when missing or flagged.
    const SensitivityCell& at(const SensitivityKey& key) const;

    /// CSV with columns j,a_bar,x_bar,c,p_treat,mass,mc_se,available.
    std::string to_csv() const;
    static SensitivityTable from_csv(const std::string& text);
};

/// True c(j, a_bar, x_bar_j) = E[Y(a) | A_bar_j = a_bar_j, x_bar_j] - E[Y(a) | A_j = 1 - a_j, A_bar_{j-1}, x_bar_j]
/// for every cell, with the latent confounders integrated out given the
/// observed history under the natural treatment process.
SensitivityTable true_sensitivity_table(const ScenarioSpec& spec, OracleMode mode,
                                        std::uint64_t mc_draws = 0, RandomStream* stream = nullptr);

/// Bit string helpers shared by table keys.
std::string bits_of(std::span<const int> v);

}  // namespace longconf
