#include "longconf/bsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "longconf/bmsm.hpp"
#include "longconf/error.hpp"
#include "longconf/glm.hpp"
#include "longconf/mcmc.hpp"

namespace longconf {

UStructure parse_u_structure(const std::string& name) {
    if (name == "time-varying") return UStructure::TimeVarying;
    if (name == "time-invariant") return UStructure::TimeInvariant;
    throw InvalidInput("unknown U structure '" + name + "' (time-varying | time-invariant)");
}

double CoefPrior::log_density(double v) const {
    if (kind == Normal) return -0.5 * precision * v * v;
    return contains(v) ? 0.0 : -std::numeric_limits<double>::infinity();
}

PriorConfig PriorConfig::simulation() { return {}; }

PriorConfig PriorConfig::application() {
    PriorConfig p;
    p.bias_lo = -10.0;
    p.bias_hi = 10.0;
    p.u_intercept_lo = -10.0;
    p.u_intercept_hi = 10.0;
    return p;
}

std::size_t BsaModel::parameter_count() const {
    std::size_t c = 0;
    for (const auto& e : equations) c += e.regressors.size();
    return c;
}

std::vector<std::string> BsaModel::parameter_names() const {
    std::vector<std::string> out;
    for (const auto& e : equations) {
        for (const auto& c : e.coef_names) out.push_back(e.name + "." + c);
    }
    return out;
}

BsaModel build_model(std::size_t visits, std::size_t p, UStructure u, const PriorConfig& pr) {
    if (visits < 2) throw InvalidInput("build_model: at least two visits are required");
    if (p < 1) throw InvalidInput("build_model: at least one covariate per visit is required");
    if (pr.bias_lo > pr.bias_hi || pr.u_intercept_lo > pr.u_intercept_hi) {
        throw InvalidInput("build_model: uniform prior lower bound exceeds upper bound");
    }
    BsaModel m;
    m.u_structure = u;
    m.visits = visits;
    m.covariates_per_visit = p;
    m.precision_shape = pr.precision_shape;
    m.precision_rate = pr.precision_rate;
    m.x_vars.assign(visits * p, -1);
    m.a_vars.assign(visits, -1);

    auto add_var = [&](std::string name) {
        m.var_names.push_back(std::move(name));
        return static_cast<int>(m.var_names.size() - 1);
    };
    auto is_latent = [&](int v) { return std::find(m.latent_vars.begin(), m.latent_vars.end(), v) != m.latent_vars.end(); };
    auto add_eq = [&](Equation::Kind kind, int response, const std::vector<int>& regs, bool latent_model) {
        Equation e;
        e.kind = kind;
        e.name = m.var_names[static_cast<std::size_t>(response)];
        e.response = response;
        e.regressors.push_back(-1);
        e.coef_names.push_back("intercept");
        e.bias.push_back(latent_model);
        if (latent_model) {
            e.priors.push_back({CoefPrior::Uniform, 0.0, pr.u_intercept_lo, pr.u_intercept_hi});
        } else {
            e.priors.push_back({CoefPrior::Normal, pr.intercept_precision, 0.0, 0.0});
        }
        for (int r : regs) {
            e.regressors.push_back(r);
            e.coef_names.push_back(m.var_names[static_cast<std::size_t>(r)]);
            const bool bias = latent_model || is_latent(r);
            e.bias.push_back(bias);
            if (bias) {
                e.priors.push_back({CoefPrior::Uniform, 0.0, pr.bias_lo, pr.bias_hi});
            } else {
                e.priors.push_back({CoefPrior::Normal, pr.coef_precision, 0.0, 0.0});
            }
        }
        m.equations.push_back(std::move(e));
    };
    auto xname = [&](std::size_t j, std::size_t k) {
        return p == 1 ? "X" + std::to_string(j + 1) : "X" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
    };
    auto past = [&](const std::vector<int>& vars, std::size_t upto) {
        return std::vector<int>(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(upto));
    };
    auto concat = [](std::initializer_list<std::vector<int>> parts) {
        std::vector<int> out;
        for (const auto& v : parts) out.insert(out.end(), v.begin(), v.end());
        return out;
    };

    if (u == UStructure::TimeInvariant) {
        const int uv = add_var("U");
        m.latent_vars.push_back(uv);
        add_eq(Equation::Logistic, uv, {}, true);
    }
    for (std::size_t j = 0; j < visits; ++j) {
        for (std::size_t k = 0; k < p; ++k) {
            const int xv = add_var(xname(j, k));
            m.x_vars[j * p + k] = xv;
            std::vector<int> regs;
            if (j > 0) {
                regs = concat({past(m.x_vars, j * p), past(m.a_vars, j)});
                if (u == UStructure::TimeVarying) regs = concat({regs, past(m.latent_vars, j)});
            }
            add_eq(Equation::Logistic, xv, regs, false);
        }
        if (u == UStructure::TimeVarying) {
            const int uv = add_var("U" + std::to_string(j + 1));
            const auto regs = concat({past(m.latent_vars, j), past(m.a_vars, j), past(m.x_vars, (j + 1) * p)});
            m.latent_vars.push_back(uv);
            add_eq(Equation::Logistic, uv, regs, true);
        }
        const int av = add_var("A" + std::to_string(j + 1));
        m.a_vars[j] = av;
        add_eq(Equation::Logistic, av, concat({past(m.a_vars, j), past(m.x_vars, (j + 1) * p), m.latent_vars}),
               false);
    }
    m.y_var = add_var("Y");
    add_eq(Equation::Gaussian, m.y_var, concat({m.a_vars, m.x_vars, m.latent_vars}), false);
    return m;
}

Eigen::MatrixXd observed_values(const BsaModel& model, const LongitudinalDataset& data) {
    if (data.visits() != model.visits || data.covariates_per_visit() != model.covariates_per_visit) {
        throw InvalidInput("BSA model shape does not match the dataset");
    }
    const auto n = static_cast<Eigen::Index>(data.n());
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(model.var_names.size()));
    const std::size_t p = model.covariates_per_visit;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < model.visits; ++j) {
            V(i, model.a_vars[j]) = data.a(s, j);
            for (std::size_t k = 0; k < p; ++k) V(i, model.x_vars[j * p + k]) = data.x(s, j, k);
        }
        V(i, model.y_var) = data.y(s);
    }
    return V;
}

namespace {

template <typename Row>
double linear_predictor(const Equation& e, const Eigen::VectorXd& coef, const Row& row) {
    double eta = 0.0;
    for (std::size_t k = 0; k < e.regressors.size(); ++k) {
        const int r = e.regressors[k];
        eta += coef[static_cast<Eigen::Index>(k)] * (r < 0 ? 1.0 : row[r]);
    }
    return eta;
}

template <typename Row>
double equation_ll(const Equation& e, const Eigen::VectorXd& coef, double precision, const Row& row) {
    const double eta = linear_predictor(e, coef, row);
    const double y = row[e.response];
    if (e.kind == Equation::Logistic) return y * eta - log1p_exp(eta);
    const double r = y - eta;
    return 0.5 * std::log(precision / (2.0 * M_PI)) - 0.5 * precision * r * r;
}

bool involves(const Equation& e, int var) {
    return e.response == var || std::find(e.regressors.begin(), e.regressors.end(), var) != e.regressors.end();
}

double row_log_odds(const BsaModel& model, const BsaState& state, Eigen::RowVectorXd& row, int var,
                    const std::vector<std::size_t>& eqs) {
    const double saved = row[var];
    double l1 = 0.0, l0 = 0.0;
    row[var] = 1.0;
    for (auto q : eqs) l1 += equation_ll(model.equations[q], state.coef[q], state.precision, row);
    row[var] = 0.0;
    for (auto q : eqs) l0 += equation_ll(model.equations[q], state.coef[q], state.precision, row);
    row[var] = saved;
    return l1 - l0;
}

std::vector<std::vector<std::size_t>> latent_equations(const BsaModel& model) {
    std::vector<std::vector<std::size_t>> out;
    for (int v : model.latent_vars) {
        std::vector<std::size_t> eqs;
        for (std::size_t q = 0; q < model.equations.size(); ++q) {
            if (involves(model.equations[q], v)) eqs.push_back(q);
        }
        out.push_back(std::move(eqs));
    }
    return out;
}

Eigen::MatrixXd equation_design(const Equation& e, const Eigen::MatrixXd& V) {
    Eigen::MatrixXd D(V.rows(), static_cast<Eigen::Index>(e.regressors.size()));
    for (std::size_t k = 0; k < e.regressors.size(); ++k) {
        const int r = e.regressors[k];
        if (r < 0) {
            D.col(static_cast<Eigen::Index>(k)).setOnes();
        } else {
            D.col(static_cast<Eigen::Index>(k)) = V.col(r);
        }
    }
    return D;
}

double clamp_to_prior(const CoefPrior& pr, double v) {
    if (pr.kind == CoefPrior::Normal) return v;
    if (pr.lo == pr.hi) return pr.lo;
    const double eps = 1e-6 * (pr.hi - pr.lo);
    return std::clamp(v, pr.lo + eps, pr.hi - eps);
}

// Maximum-likelihood starting values given the initial imputation, moved inside prior support.
Eigen::VectorXd initial_coefficients(const Equation& e, const Eigen::MatrixXd& V) {
    const auto D = equation_design(e, V);
    const Eigen::VectorXd y = V.col(e.response);
    std::vector<double> yv(y.data(), y.data() + y.size());
    Eigen::VectorXd c = Eigen::VectorXd::Zero(D.cols());
    try {
        const DesignMatrix X(e.coef_names, D);
        c = e.kind == Equation::Logistic ? fit_logistic(X, yv).coefficients : fit_linear(X, yv).coefficients;
    } catch (const Error&) {
        c.setZero();
        if (e.kind == Equation::Gaussian) c[0] = y.mean();
    }
    for (Eigen::Index k = 0; k < c.size(); ++k) c[k] = clamp_to_prior(e.priors[static_cast<std::size_t>(k)], c[k]);
    return c;
}

}  // namespace

double joint_log_likelihood(const BsaModel& model, const BsaState& state, Eigen::Index i) {
    const Eigen::RowVectorXd row = state.values.row(i);
    double ll = 0.0;
    for (std::size_t q = 0; q < model.equations.size(); ++q) {
        ll += equation_ll(model.equations[q], state.coef[q], state.precision, row);
    }
    return ll;
}

double u_log_odds(const BsaModel& model, const BsaState& state, Eigen::Index i, std::size_t latent) {
    const int var = model.latent_vars.at(latent);
    std::vector<std::size_t> eqs;
    for (std::size_t q = 0; q < model.equations.size(); ++q) {
        if (involves(model.equations[q], var)) eqs.push_back(q);
    }
    Eigen::RowVectorXd row = state.values.row(i);
    return row_log_odds(model, state, row, var, eqs);
}

RawChain run_chain(const BsaModel& model, const LongitudinalDataset& data, const ChainConfig& cfg,
                   RandomStream& stream) {
    data.require_no_latent("run_chain");
    if (cfg.thin < 1 || cfg.burn_in < 0 || cfg.kept_iterations < cfg.thin) {
        throw InvalidInput("run_chain: need thin >= 1, burn_in >= 0 and kept_iterations >= thin");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(data.n());
    const std::size_t neq = model.equations.size();
    BsaState st;
    st.values = observed_values(model, data);
    for (int v : model.latent_vars) {
        for (Eigen::Index i = 0; i < n; ++i) st.values(i, v) = stream.bernoulli(0.5) ? 1.0 : 0.0;
    }
    for (const auto& e : model.equations) st.coef.push_back(initial_coefficients(e, st.values));
    {
        const auto& ye = model.equations.back();
        const Eigen::VectorXd r = st.values.col(ye.response) - equation_design(ye, st.values) * st.coef.back();
        st.precision = 1.0 / std::max(r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)), 1e-8);
    }

    const auto lat_eqs = latent_equations(model);
    std::vector<std::vector<AdaptiveScale>> scales(neq);
    for (std::size_t q = 0; q < neq; ++q) {
        scales[q].resize(model.equations[q].regressors.size());
        for (auto& s : scales[q]) s.log_scale = cfg.initial_log_scale;
    }

    RawChain out;
    out.names = model.parameter_names();
    const int kept = cfg.kept_iterations / cfg.thin;
    out.draws.resize(kept, static_cast<Eigen::Index>(model.parameter_count()));
    out.precision.reserve(static_cast<std::size_t>(kept));
    out.latent_mean = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(model.latent_vars.size()));

    const long total = static_cast<long>(cfg.burn_in) + cfg.kept_iterations;
    Eigen::RowVectorXd row;
    Eigen::VectorXd eta, eta_new;
    int recorded = 0;
    const auto& yeq = model.equations.back();
    const std::size_t yq = neq - 1;

    for (long it = 0; it < total; ++it) {
        const bool adapt = it < cfg.burn_in;
        if (it == cfg.burn_in) {
            for (auto& eq_scales : scales) {
                for (auto& sc : eq_scales) sc.proposed = sc.accepted = 0;
            }
        }

        // (a) Gibbs update of every latent value.
        for (Eigen::Index i = 0; i < n; ++i) {
            row = st.values.row(i);
            for (std::size_t m = 0; m < model.latent_vars.size(); ++m) {
                const double lo = row_log_odds(model, st, row, model.latent_vars[m], lat_eqs[m]);
                row[model.latent_vars[m]] = stream.uniform() < inv_logit(lo) ? 1.0 : 0.0;
            }
            st.values.row(i) = row;
        }

        // (b) Metropolis updates, one scalar coefficient at a time.
        for (std::size_t q = 0; q < neq; ++q) {
            const auto& e = model.equations[q];
            const Eigen::MatrixXd D = equation_design(e, st.values);
            const Eigen::VectorXd y = st.values.col(e.response);
            auto& coef = st.coef[q];
            eta = D * coef;
            for (std::size_t k = 0; k < e.regressors.size(); ++k) {
                const auto& pr = e.priors[k];
                if (e.kind == Equation::Gaussian && !e.bias[k]) continue;
                if (pr.kind == CoefPrior::Uniform && pr.lo == pr.hi) continue;
                const auto kk = static_cast<Eigen::Index>(k);
                auto& sc = scales[q][k];
                const double delta = sc.scale() * stream.normal();
                const double proposal = coef[kk] + delta;
                bool accept = false;
                if (pr.contains(proposal)) {
                    eta_new = eta + delta * D.col(kk);
                    double dll = pr.log_density(proposal) - pr.log_density(coef[kk]);
                    if (e.kind == Equation::Logistic) {
                        for (Eigen::Index i = 0; i < n; ++i) {
                            dll += y[i] * delta * D(i, kk) - log1p_exp(eta_new[i]) + log1p_exp(eta[i]);
                        }
                    } else {
                        dll += -0.5 * st.precision * ((y - eta_new).squaredNorm() - (y - eta).squaredNorm());
                    }
                    accept = std::log(stream.uniform()) < dll;
                }
                if (accept) {
                    coef[kk] = proposal;
                    eta.swap(eta_new);
                }
                sc.record(accept, it, adapt);
            }
        }

        // Outcome model: non-bias block from its Gaussian full conditional.
        {
            const Eigen::MatrixXd D = equation_design(yeq, st.values);
            const Eigen::VectorXd y = st.values.col(yeq.response);
            auto& coef = st.coef[yq];
            std::vector<Eigen::Index> free, fixed;
            for (std::size_t k = 0; k < yeq.regressors.size(); ++k) {
                (yeq.bias[k] ? fixed : free).push_back(static_cast<Eigen::Index>(k));
            }
            Eigen::VectorXd r = y;
            for (auto k : fixed) r -= coef[k] * D.col(k);
            Eigen::MatrixXd Dn(n, static_cast<Eigen::Index>(free.size()));
            for (std::size_t c = 0; c < free.size(); ++c) Dn.col(static_cast<Eigen::Index>(c)) = D.col(free[c]);
            Eigen::MatrixXd Q = st.precision * Dn.transpose() * Dn;
            for (std::size_t c = 0; c < free.size(); ++c) {
                Q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) +=
                    yeq.priors[static_cast<std::size_t>(free[c])].precision;
            }
            const Eigen::LLT<Eigen::MatrixXd> llt(Q);
            if (llt.info() != Eigen::Success) throw FitError("run_chain: outcome-model precision matrix not positive definite");
            const Eigen::VectorXd mean = llt.solve(st.precision * Dn.transpose() * r);
            Eigen::VectorXd z(static_cast<Eigen::Index>(free.size()));
            for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = stream.normal();
            const Eigen::VectorXd draw = mean + llt.matrixU().solve(z);
            for (std::size_t c = 0; c < free.size(); ++c) coef[free[c]] = draw[static_cast<Eigen::Index>(c)];

            // (c) Conjugate Gamma draw for the outcome precision.
            const double rss = (y - D * coef).squaredNorm();
            const double shape = model.precision_shape + 0.5 * static_cast<double>(n);
            const double rate = model.precision_rate + 0.5 * rss;
            st.precision = stream.gamma(shape) / rate;
        }

        if (!adapt) {
            const long t = it - cfg.burn_in;
            if ((t + 1) % cfg.thin == 0 && recorded < kept) {
                Eigen::Index c = 0;
                for (const auto& v : st.coef) {
                    out.draws.row(recorded).segment(c, v.size()) = v.transpose();
                    c += v.size();
                }
                out.precision.push_back(st.precision);
                for (std::size_t m = 0; m < model.latent_vars.size(); ++m) {
                    out.latent_mean.col(static_cast<Eigen::Index>(m)) += st.values.col(model.latent_vars[m]);
                }
                ++recorded;
            }
        }
    }
    if (recorded > 0) out.latent_mean /= static_cast<double>(recorded);

    for (std::size_t q = 0; q < neq; ++q) {
        const auto& e = model.equations[q];
        for (std::size_t k = 0; k < e.regressors.size(); ++k) {
            const auto& sc = scales[q][k];
            if (sc.proposed == 0) continue;
            const std::string name = e.name + "." + e.coef_names[k];
            const double rate = sc.acceptance_rate();
            out.acceptance.emplace_back(name, rate);
            if (rate < 0.05 || rate > 0.95) {
                out.warnings.push_back("acceptance rate " + format_double(rate) + " for " + name +
                                       " outside [0.05, 0.95]");
            }
        }
    }
    return out;
}

std::vector<double> gcomp_apo(const RawChain& chain, const BsaModel& model, const TreatmentRegime& regime,
                              std::size_t mc_paths, const RandomStream& stream) {
    if (mc_paths < 1) throw InvalidInput("gcomp_apo: mc_paths must be >= 1");
    if (regime.visits() != model.visits) throw InvalidInput("gcomp_apo: regime length does not match the model");
    const auto nv = static_cast<Eigen::Index>(model.var_names.size());
    std::vector<int> clamp(static_cast<std::size_t>(nv), -1);
    for (std::size_t j = 0; j < model.visits; ++j) clamp[static_cast<std::size_t>(model.a_vars[j])] = regime[j];

    std::vector<Eigen::VectorXd> coef(model.equations.size());
    std::vector<double> apo(static_cast<std::size_t>(chain.draws.rows()));
    Eigen::RowVectorXd row(nv);
    for (Eigen::Index s = 0; s < chain.draws.rows(); ++s) {
        Eigen::Index c = 0;
        for (std::size_t q = 0; q < model.equations.size(); ++q) {
            const auto k = static_cast<Eigen::Index>(model.equations[q].regressors.size());
            coef[q] = chain.draws.row(s).segment(c, k).transpose();
            c += k;
        }
        auto rs = stream.derive("gcomp", static_cast<std::uint64_t>(s));
        double total = 0.0;
        for (std::size_t path = 0; path < mc_paths; ++path) {
            row.setZero();
            double ymean = 0.0;
            for (std::size_t q = 0; q < model.equations.size(); ++q) {
                const auto& e = model.equations[q];
                const double eta = linear_predictor(e, coef[q], row);
                if (e.kind == Equation::Gaussian) {
                    ymean = eta;
                    continue;
                }
                // One uniform per stochastic node, including clamped ones, keeps regimes on common numbers.
                const double u = rs.uniform();
                const int cl = clamp[static_cast<std::size_t>(e.response)];
                row[e.response] = cl >= 0 ? cl : (u < inv_logit(eta) ? 1.0 : 0.0);
            }
            total += ymean;
        }
        apo[static_cast<std::size_t>(s)] = total / static_cast<double>(mc_paths);
    }
    return apo;
}

BsaPosterior run_bsa(const BsaModel& model, const LongitudinalDataset& data, const BsaConfig& cfg,
                     const RandomStream& stream) {
    BsaPosterior post;
    auto chain_stream = stream.derive("chain", 0);
    post.chain = run_chain(model, data, cfg.chain, chain_stream);
    const std::size_t paths = cfg.mc_paths ? cfg.mc_paths : data.n();
    const auto gs = stream.derive("gcomp-root", 0);
    post.apo_treated = gcomp_apo(post.chain, model, cfg.treated, paths, gs);
    post.apo_reference = gcomp_apo(post.chain, model, cfg.reference, paths, gs);
    const auto S = post.apo_treated.size();
    post.ate_draws.resize(S);
    for (std::size_t s = 0; s < S; ++s) post.ate_draws[s] = post.apo_treated[s] - post.apo_reference[s];
    const auto& d = post.ate_draws;
    post.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(S);
    double ss = 0.0;
    for (double v : d) ss += (v - post.mean) * (v - post.mean);
    post.sd = S > 1 ? std::sqrt(ss / static_cast<double>(S - 1)) : 0.0;
    post.ci95 = {quantile(d, 0.025), quantile(d, 0.975)};

    auto z_or_nan = [](std::span<const double> v) {
        try {
            return geweke_z(v);
        } catch (const InvalidInput&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    const auto& yeq = model.equations.back();
    const auto first = static_cast<Eigen::Index>(model.parameter_count() - yeq.regressors.size());
    std::vector<double> col(S);
    for (std::size_t k = 0; k < yeq.regressors.size(); ++k) {
        for (std::size_t s = 0; s < S; ++s) {
            col[s] = post.chain.draws(static_cast<Eigen::Index>(s), first + static_cast<Eigen::Index>(k));
        }
        post.geweke.emplace_back(yeq.name + "." + yeq.coef_names[k], z_or_nan(col));
    }
    post.geweke.emplace_back("ate", z_or_nan(d));
    return post;
}

}  // namespace longconf
