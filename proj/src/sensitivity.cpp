#include "longconf/sensitivity.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "longconf/error.hpp"
#include "longconf/glm.hpp"

namespace longconf {

SensitivityFunctionSpec SensitivityFunctionSpec::zero() { return {}; }

SensitivityFunctionSpec SensitivityFunctionSpec::constant(std::vector<double> per_visit) {
    SensitivityFunctionSpec s;
    s.kind = SfKind::ConstantPerVisit;
    s.constants = std::move(per_visit);
    return s;
}

SensitivityFunctionSpec SensitivityFunctionSpec::oracle(SensitivityTable table, ProbabilitySource source) {
    SensitivityFunctionSpec s;
    s.kind = SfKind::OracleTable;
    s.table = std::make_shared<const SensitivityTable>(std::move(table));
    s.probability_source = source;
    return s;
}

SensitivityFunctionSpec SensitivityFunctionSpec::band(double h, double sigma_hat, int sign) {
    if (sign != 1 && sign != -1) throw InvalidInput("band sign must be +1 or -1");
    if (!(sigma_hat >= 0.0)) throw InvalidInput("band sigma_hat must be >= 0");
    SensitivityFunctionSpec s;
    s.kind = SfKind::ResidualBand;
    s.h = h;
    s.sigma_hat = sigma_hat;
    s.sign = sign;
    return s;
}

std::string SensitivityFunctionSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case SfKind::Zero: os << "zero"; break;
        case SfKind::ConstantPerVisit:
            os << "const:";
            for (std::size_t j = 0; j < constants.size(); ++j) os << (j ? "," : "") << format_double(constants[j]);
            break;
        case SfKind::OracleTable: os << "oracle"; break;
        case SfKind::ResidualBand: os << "band:" << (sign < 0 ? "-" : "") << format_double(h); break;
    }
    return os.str();
}

double eval_c(const SensitivityFunctionSpec& spec, std::size_t j, std::span<const int> a_bar,
              std::span<const int> x_bar) {
    if (j < 1 || j > a_bar.size()) throw InvalidInput("eval_c: visit index out of range");
    switch (spec.kind) {
        case SfKind::Zero: return 0.0;
        case SfKind::ConstantPerVisit:
            if (spec.constants.size() != a_bar.size()) {
                throw InvalidInput("constant sensitivity function needs one value per visit");
            }
            return spec.constants[j - 1];
        case SfKind::ResidualBand: return spec.sign * spec.h * spec.sigma_hat;
        case SfKind::OracleTable: {
            const std::size_t p = spec.table->covariates_per_visit;
            if (x_bar.size() < p * j) throw InvalidInput("eval_c: covariate history too short");
            return spec.table->at({j, bits_of(a_bar), bits_of(x_bar.first(p * j))}).c;
        }
    }
    return 0.0;
}

CorrectedDataset correct_outcomes(const LongitudinalDataset& data, const SensitivityFunctionSpec& spec,
                                  const Eigen::MatrixXd& treat_prob) {
    const std::size_t n = data.n(), J = data.visits();
    if (static_cast<std::size_t>(treat_prob.rows()) != n || static_cast<std::size_t>(treat_prob.cols()) != J) {
        throw InvalidInput("correct_outcomes: treatment probabilities must be n x J");
    }
    CorrectedDataset out{data, std::vector<double>(n), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = data.treatments(i);
        const auto x = data.covariates(i);
        double corr = 0.0;
        if (spec.kind != SfKind::Zero) {
            for (std::size_t j = 0; j < J; ++j) {
                const double p1 = treat_prob(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (!(p1 > 0.0 && p1 < 1.0)) {
                    throw InvalidInput("correct_outcomes: treatment probability outside (0,1) for subject " +
                                       std::to_string(i + 1) + " visit " + std::to_string(j + 1));
                }
                const double p_other = a[j] == 1 ? 1.0 - p1 : p1;
                corr += eval_c(spec, j + 1, a, x) * p_other;
            }
        }
        out.correction[i] = corr;
        out.y_sf[i] = data.y(i) - corr;
    }
    return out;
}

Eigen::MatrixXd oracle_treatment_probabilities(const LongitudinalDataset& data, const SensitivityTable& table) {
    const std::size_t n = data.n(), J = data.visits(), p = data.covariates_per_visit();
    if (table.visits != J || table.covariates_per_visit != p) {
        throw InvalidInput("oracle probabilities: table shape does not match the dataset");
    }
    Eigen::MatrixXd P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = bits_of(data.treatments(i));
        const auto x = data.covariates(i);
        for (std::size_t j = 0; j < J; ++j) {
            // p_treat depends only on the prefix; the subject's own regime always indexes a stored cell.
            P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                table.at({j + 1, a, bits_of(x.first(p * (j + 1)))}).p_treat;
        }
    }
    return P;
}

SensitivityFunctionSpec parse_sensitivity(const std::string& text, const LongitudinalDataset& data,
                                          ProbabilitySource source) {
    SensitivityFunctionSpec s;
    if (text == "zero") {
        s = SensitivityFunctionSpec::zero();
    } else if (text.rfind("const:", 0) == 0) {
        std::vector<double> v;
        std::istringstream is(text.substr(6));
        std::string item;
        while (std::getline(is, item, ',')) {
            try {
                v.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw InvalidInput("bad sensitivity constant '" + item + "'");
            }
        }
        s = SensitivityFunctionSpec::constant(std::move(v));
    } else if (text.rfind("oracle:", 0) == 0) {
        std::ifstream f(text.substr(7), std::ios::binary);
        if (!f) throw InvalidInput("cannot open " + text.substr(7));
        std::ostringstream os;
        os << f.rdbuf();
        s = SensitivityFunctionSpec::oracle(SensitivityTable::from_csv(os.str()), source);
    } else if (text.rfind("band:", 0) == 0) {
        double h = 0.0;
        try {
            h = std::stod(text.substr(5));
        } catch (const std::exception&) {
            throw InvalidInput("bad band multiplier in '" + text + "'");
        }
        s = SensitivityFunctionSpec::band(std::abs(h), outcome_residual_sd(data), h < 0 ? -1 : 1);
    } else {
        throw InvalidInput("sensitivity function must be zero, const:c1,c2,..., oracle:<table.csv> or band:<h>");
    }
    if (source == ProbabilitySource::OracleTable && s.kind != SfKind::OracleTable) {
        throw InvalidInput("oracle treatment probabilities require an oracle sensitivity table");
    }
    return s;
}

double outcome_residual_sd(const LongitudinalDataset& data) {
    const std::size_t n = data.n(), J = data.visits(), p = data.covariates_per_visit();
    std::vector<std::string> names{"(Intercept)"};
    for (std::size_t j = 0; j < J; ++j) names.push_back("a" + std::to_string(j + 1));
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t k = 0; k < p; ++k) {
            names.push_back(p == 1 ? "x" + std::to_string(j + 1)
                                   : "x" + std::to_string(j + 1) + "_" + std::to_string(k + 1));
        }
    }
    Eigen::MatrixXd M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index c = 0;
        M(r, c++) = 1.0;
        for (std::size_t j = 0; j < J; ++j) M(r, c++) = data.a(i, j);
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t k = 0; k < p; ++k) M(r, c++) = data.x(i, j, k);
        }
    }
    return fit_linear(DesignMatrix(names, M), data.outcomes()).residual_sd;
}

}  // namespace longconf
