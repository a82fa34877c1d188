#include "longconf/glm.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "longconf/error.hpp"

namespace longconf {

DesignMatrix::DesignMatrix(std::vector<std::string> column_names, Eigen::MatrixXd v)
    : names(std::move(column_names)), values(std::move(v)) {}

void DesignMatrix::validate() const {
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) {
        throw InvalidInput("design matrix: name count does not match column count");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw InvalidInput("design matrix: duplicate column " + n);
    }
    if (!values.allFinite()) throw InvalidInput("design matrix: non-finite entry");
}

double GlmFit::coef(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return coefficients[static_cast<Eigen::Index>(k)];
    }
    throw InvalidInput("no coefficient named " + name);
}

double GlmFit::se(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) {
            const auto e = static_cast<Eigen::Index>(k);
            return std::sqrt(covariance(e, e));
        }
    }
    throw InvalidInput("no coefficient named " + name);
}

namespace {

std::vector<double> resolve_weights(std::span<const double> w, Eigen::Index n) {
    if (w.empty()) return std::vector<double>(static_cast<std::size_t>(n), 1.0);
    if (static_cast<Eigen::Index>(w.size()) != n) {
        throw InvalidInput("weights length does not match design rows");
    }
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("weights must be finite and >= 0");
    }
    return {w.begin(), w.end()};
}

// Throws FitError naming a column when sqrt(w) X is numerically rank deficient.
void check_rank(const DesignMatrix& X, const std::vector<double>& w) {
    Eigen::MatrixXd Xw = X.values;
    for (Eigen::Index i = 0; i < Xw.rows(); ++i) Xw.row(i) *= std::sqrt(w[static_cast<std::size_t>(i)]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < Xw.cols()) {
        const auto perm = qr.colsPermutation().indices();
        const auto bad = perm[qr.rank()];
        throw FitError("rank-deficient design: column '" + X.names[static_cast<std::size_t>(bad)] +
                       "' is linearly dependent on the others");
    }
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto s = static_cast<std::size_t>(i);
        ll += w[s] * (y[s] * eta[i] - log1p_exp(eta[i]));
    }
    return ll;
}

Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd r(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto s = static_cast<std::size_t>(i);
        r[i] = w[s] * (y[s] - inv_logit(eta[i]));
    }
    return X.transpose() * r;
}

GlmFit fit_logistic(const DesignMatrix& X, std::span<const double> y,
                    std::span<const double> weights, const LogisticOptions& opt) {
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw InvalidInput("fit_logistic: y length mismatch");
    for (double v : y) {
        if (v != 0.0 && v != 1.0) throw InvalidInput("fit_logistic: response must be 0/1");
    }
    const auto w = resolve_weights(weights, n);
    check_rank(X, w);

    GlmFit fit;
    fit.names = X.names;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double ll = logistic_log_likelihood(X.values, y, w, beta);
    fit.trace.push_back(ll);
    Eigen::MatrixXd info(p, p);

    for (int iter = 0; iter <= opt.max_iter; ++iter) {
        const Eigen::VectorXd eta = X.values * beta;
        Eigen::VectorXd resid(n), wt(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto s = static_cast<std::size_t>(i);
            const double pr = inv_logit(eta[i]);
            resid[i] = w[s] * (y[s] - pr);
            wt[i] = w[s] * pr * (1.0 - pr);
        }
        const Eigen::VectorXd score = X.values.transpose() * resid;
        info.noalias() = X.values.transpose() * wt.asDiagonal() * X.values;
        fit.iterations = iter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw FitError("fit_logistic: information matrix is singular (separation or rank loss)");
        }
        const Eigen::VectorXd step = ldlt.solve(score);
        // Newton decrement; scale-free, unlike the raw score which grows with n.
        if (score.cwiseAbs().maxCoeff() < opt.tol || score.dot(step) < opt.tol) {
            // Log-likelihood differences are rounding noise here; take the final step unchecked.
            beta += step;
            ll = logistic_log_likelihood(X.values, y, w, beta);
            fit.converged = true;
            break;
        }
        if (iter == opt.max_iter) break;
        double t = 1.0;
        Eigen::VectorXd next = beta + step;
        double ll_next = logistic_log_likelihood(X.values, y, w, next);
        for (int h = 0; h < 30 && !(ll_next >= ll); ++h) {
            t *= 0.5;
            next = beta + t * step;
            ll_next = logistic_log_likelihood(X.values, y, w, next);
        }
        if (!(ll_next >= ll)) {
            // No ascent possible at machine precision; the score test above decides convergence.
            next = beta;
            ll_next = ll;
        }
        beta = next;
        ll = ll_next;
        fit.trace.push_back(ll);
        for (Eigen::Index k = 0; k < p; ++k) {
            if (std::abs(beta[k]) > opt.divergence_bound) {
                throw FitError("fit_logistic: separation detected, coefficient for column '" +
                               X.names[static_cast<std::size_t>(k)] + "' diverges");
            }
        }
    }
    if (!fit.converged) {
        throw FitError("fit_logistic: no convergence within " + std::to_string(opt.max_iter) +
                       " iterations");
    }
    fit.coefficients = beta;
    fit.log_likelihood = ll;
    fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    return fit;
}

GlmFit fit_linear(const DesignMatrix& X, std::span<const double> y, std::span<const double> weights) {
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw InvalidInput("fit_linear: y length mismatch");
    const auto w = resolve_weights(weights, n);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);

    Eigen::MatrixXd Xw = X.values;
    Eigen::VectorXd yw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sqrt(w[static_cast<std::size_t>(i)]);
        Xw.row(i) *= s;
        yw[i] = s * y[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        const auto bad = qr.colsPermutation().indices()[qr.rank()];
        throw FitError("fit_linear: rank-deficient design at column '" +
                       X.names[static_cast<std::size_t>(bad)] + "'");
    }
    GlmFit fit;
    fit.names = X.names;
    fit.coefficients = qr.solve(yw);
    fit.converged = true;
    fit.iterations = 1;
    const double rss = (yw - Xw * fit.coefficients).squaredNorm();
    const double dof = wsum - static_cast<double>(p);
    fit.residual_sd = dof > 0 ? std::sqrt(rss / dof) : 0.0;

    // (X'WX)^-1 = P R^-1 R^-T P^T
    const Eigen::MatrixXd R =
        qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd unscaled = Rinv * Rinv.transpose();
    const auto& P = qr.colsPermutation();
    fit.covariance = P * unscaled * P.transpose() * (fit.residual_sd * fit.residual_sd);

    const double sigma2 = wsum > 0 ? rss / wsum : 0.0;
    fit.log_likelihood =
        sigma2 > 0 ? -0.5 * wsum * (std::log(2.0 * M_PI * sigma2) + 1.0) : 0.0;
    if (!(dof > 0)) throw FitError("fit_linear: total weight must exceed the number of columns");
    return fit;
}

Eigen::VectorXd predict_prob(const GlmFit& fit, const DesignMatrix& X) {
    if (X.names != fit.names) throw InvalidInput("predict_prob: design columns do not match fit");
    const Eigen::VectorXd eta = X.values * fit.coefficients;
    return eta.unaryExpr([](double e) { return inv_logit(e); });
}

}  // namespace longconf
