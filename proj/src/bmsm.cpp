#include "longconf/bmsm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longconf/error.hpp"
#include "longconf/mcmc.hpp"

namespace longconf {

std::vector<double> draw_dirichlet(std::size_t n, RandomStream& stream) {
    if (n < 1) throw InvalidInput("draw_dirichlet: n must be >= 1");
    std::vector<double> e(n);
    for (auto& v : e) v = stream.exponential();
    const double s = std::accumulate(e.begin(), e.end(), 0.0);
    for (auto& v : e) v /= s;
    return e;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw InvalidInput("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

WeightVector posterior_mean_weights(const LongitudinalDataset& data, int draws, RandomStream& stream) {
    data.require_no_latent("posterior_mean_weights");
    const std::size_t n = data.n(), J = data.visits();
    Eigen::MatrixXd num(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(J));
    Eigen::MatrixXd den = num;
    LogisticPosteriorConfig cfg;
    cfg.draws = draws;
    cfg.burn_in = draws;
    for (std::size_t j = 0; j < J; ++j) {
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = data.a(i, j);
        for (int side = 0; side < 2; ++side) {
            const auto X = treatment_design(data, j, side == 1, false);
            auto rs = stream.derive(side ? "den" : "num", j);
            const Eigen::MatrixXd B = sample_logistic_posterior(X, y, cfg, rs);
            // Posterior mean of P(A_j = 1 | history); the observed-treatment density follows.
            const Eigen::MatrixXd eta = X.values * B.transpose();
            Eigen::VectorXd pm(static_cast<Eigen::Index>(n));
            for (Eigen::Index i = 0; i < eta.rows(); ++i) {
                double s = 0.0;
                for (Eigen::Index d = 0; d < eta.cols(); ++d) s += inv_logit(eta(i, d));
                pm[i] = s / static_cast<double>(eta.cols());
            }
            (side ? den : num).col(static_cast<Eigen::Index>(j)) = pm;
        }
    }
    return weights_from_probabilities(data, num, den);
}

WeightVector bmsm_weights(const LongitudinalDataset& data, const BmsmConfig& cfg, RandomStream& stream) {
    if (cfg.weight_mode == WeightMode::PosteriorMean) return posterior_mean_weights(data, cfg.posterior_draws, stream);
    return compute_weights(data, fit_treatment_models(data, false));
}

BmsmPosterior fit_bmsm(const LongitudinalDataset& data, std::span<const double> y, const WeightVector& weights,
                       const BmsmConfig& cfg, const RandomStream& stream) {
    if (cfg.B < 1) throw InvalidInput("fit_bmsm: B must be >= 1");
    const std::size_t n = data.n();
    if (y.size() != n || weights.w.size() != n) throw InvalidInput("fit_bmsm: outcome/weights not aligned");
    MsmConfig mc;
    mc.form = cfg.form;
    mc.treated = cfg.treated;
    mc.reference = cfg.reference;

    BmsmPosterior post;
    // Weighted least squares is scale-invariant, so pi is carried as n * pi to keep sum(w) > p.
    std::vector<double> pw(weights.w);
    post.point = msm_ate(data, y, pw, mc);

    const auto X = marginal_design(data, cfg.form);
    const Eigen::RowVectorXd contrast =
        marginal_row(X, cfg.treated, cfg.form) - marginal_row(X, cfg.reference, cfg.form);
    for (int b = 0; b < cfg.B; ++b) {
        auto rs = stream.derive("dirichlet", static_cast<std::uint64_t>(b));
        const auto pi = draw_dirichlet(n, rs);
        for (std::size_t i = 0; i < n; ++i) pw[i] = static_cast<double>(n) * pi[i] * weights.w[i];
        try {
            auto fit = fit_linear(X, y, pw);
            post.ate_draws.push_back(contrast.dot(fit.coefficients));
            post.theta_draws.push_back(std::move(fit.coefficients));
        } catch (const FitError& e) {
            ++post.skipped;
            post.warnings.push_back("draw " + std::to_string(b) + " skipped: " + e.what());
        }
    }
    if (post.skipped * 20 > cfg.B) {
        throw FitError("fit_bmsm: " + std::to_string(post.skipped) + " of " + std::to_string(cfg.B) +
                       " Dirichlet draws gave a degenerate weighted design");
    }
    const auto& d = post.ate_draws;
    post.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    if (d.size() > 1) {
        double ss = 0.0;
        for (double v : d) ss += (v - post.mean) * (v - post.mean);
        post.sd = std::sqrt(ss / static_cast<double>(d.size() - 1));
    }
    post.ci95 = {quantile(d, 0.025), quantile(d, 0.975)};
    return post;
}

}  // namespace longconf
