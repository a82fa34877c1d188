#include "longconf/mcmc.hpp"

#include <cmath>
#include <numeric>

#include "longconf/error.hpp"

namespace longconf {

void AdaptiveScale::record(bool accept, long iteration, bool adapt) {
    ++proposed;
    if (accept) ++accepted;
    if (adapt) {
        log_scale += ((accept ? 1.0 : 0.0) - target) / std::pow(static_cast<double>(iteration) + 1.0, 0.6);
        log_scale = std::clamp(log_scale, -12.0, 5.0);
    }
}

namespace {

// Spectral density at zero (variance of the mean times length) from batch means.
std::pair<double, double> mean_and_spectral(std::span<const double> seg, int batches) {
    const auto n = seg.size();
    const double mean = std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(n);
    const std::size_t b = n / static_cast<std::size_t>(batches);
    if (b < 1) throw InvalidInput("geweke_z: window shorter than the batch count");
    std::vector<double> bm(static_cast<std::size_t>(batches));
    for (int k = 0; k < batches; ++k) {
        const auto first = seg.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(k) * b);
        bm[static_cast<std::size_t>(k)] = std::accumulate(first, first + static_cast<std::ptrdiff_t>(b), 0.0) /
                                          static_cast<double>(b);
    }
    const double bmean = std::accumulate(bm.begin(), bm.end(), 0.0) / batches;
    double ss = 0.0;
    for (double v : bm) ss += (v - bmean) * (v - bmean);
    const double var_batch = ss / (batches - 1);
    return {mean, var_batch * static_cast<double>(b)};
}

}  // namespace

double geweke_z(std::span<const double> chain, double first_frac, double last_frac, int batches) {
    if (chain.size() < 100) throw InvalidInput("geweke_z: chain segment shorter than 100");
    if (!(first_frac > 0 && last_frac > 0 && first_frac + last_frac <= 1.0)) {
        throw InvalidInput("geweke_z: window fractions must be positive and sum to at most 1");
    }
    const auto n = chain.size();
    const auto na = static_cast<std::size_t>(std::floor(first_frac * static_cast<double>(n)));
    const auto nb = static_cast<std::size_t>(std::floor(last_frac * static_cast<double>(n)));
    const auto [ma, sa] = mean_and_spectral(chain.first(na), batches);
    const auto [mb, sb] = mean_and_spectral(chain.last(nb), batches);
    if (!(sa > 0.0) || !(sb > 0.0)) throw InvalidInput("geweke_z: zero variance in a window (constant chain)");
    return (ma - mb) / std::sqrt(sa / static_cast<double>(na) + sb / static_cast<double>(nb));
}

Eigen::MatrixXd sample_logistic_posterior(const DesignMatrix& X, std::span<const double> y,
                                          const LogisticPosteriorConfig& cfg, RandomStream& stream) {
    const Eigen::Index n = X.rows(), p = X.cols();
    Eigen::VectorXd beta = fit_logistic(X, y).coefficients;
    Eigen::VectorXd eta = X.values * beta;
    std::vector<AdaptiveScale> scales(static_cast<std::size_t>(p));
    auto prior_prec = [&](Eigen::Index k) {
        return X.names[static_cast<std::size_t>(k)] == "(Intercept)" ? cfg.intercept_prior_precision
                                                                      : cfg.prior_precision;
    };
    Eigen::MatrixXd out(cfg.draws, p);
    const long total = static_cast<long>(cfg.burn_in) + cfg.draws;
    Eigen::VectorXd eta_new(n);
    for (long it = 0; it < total; ++it) {
        const bool adapt = it < cfg.burn_in;
        for (Eigen::Index k = 0; k < p; ++k) {
            auto& sc = scales[static_cast<std::size_t>(k)];
            const double delta = sc.scale() * stream.normal();
            eta_new = eta + delta * X.values.col(k);
            double dll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double yi = y[static_cast<std::size_t>(i)];
                dll += yi * (eta_new[i] - eta[i]) - log1p_exp(eta_new[i]) + log1p_exp(eta[i]);
            }
            const double b1 = beta[k] + delta;
            dll += -0.5 * prior_prec(k) * (b1 * b1 - beta[k] * beta[k]);
            const bool accept = std::log(stream.uniform()) < dll;
            if (accept) {
                beta[k] = b1;
                eta.swap(eta_new);
            }
            sc.record(accept, it, adapt);
        }
        if (!adapt) out.row(it - cfg.burn_in) = beta.transpose();
    }
    return out;
}

}  // namespace longconf
