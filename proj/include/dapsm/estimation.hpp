#pragma once

#include <Eigen/Dense>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/matched_set.hpp"

namespace dapsm {

enum class EffectMethod { diff_means, linear_adjusted };

struct EffectEstimate {
    double estimate = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double standard_error = 0.0;
    int n_pairs = 0;
    EffectMethod method = EffectMethod::diff_means;
    bool degenerate_se = false;  // zero (or undefined) sampling variability
    double confidence_level = 0.95;
};

namespace detail {

struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    double sigma2 = 0.0;
    int df_residual = 0;
};

inline OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (y.size() != n) throw InputError("ols_fit: response length does not match design");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) throw EstimationError("ols_fit: design matrix is rank deficient");
    if (n <= p) throw EstimationError("ols_fit: no residual degrees of freedom");

    OlsFit fit;
    fit.coefficients = qr.solve(y);
    const Eigen::VectorXd residuals = y - x * fit.coefficients;
    fit.df_residual = static_cast<int>(n - p);
    fit.sigma2 = residuals.squaredNorm() / static_cast<double>(fit.df_residual);

    const Eigen::MatrixXd xtx_inv =
        (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.standard_errors.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        fit.standard_errors(j) = std::sqrt(std::max(0.0, fit.sigma2 * xtx_inv(j, j)));
    }
    return fit;
}

inline double normal_quantile(double prob) {
    boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, prob);
}

inline double t_quantile(int df, double prob) {
    boost::math::students_t_distribution<double> t(static_cast<double>(df));
    return boost::math::quantile(t, prob);
}

}  // namespace detail

// Difference in means of the matched pairs; the standard error comes from
// the paired-difference sample standard deviation.
inline EffectEstimate att_diff_means(const Dataset& ds, const MatchedSet& matched,
                                     double confidence_level = 0.95) {
    if (!ds.has_outcome) throw EstimationError("att_diff_means: dataset has no outcome");
    if (matched.empty()) throw EstimationError("att_diff_means: matched set is empty");

    const std::vector<int> treated = ds.treated_indices();
    const std::vector<int> control = ds.control_indices();
    const int n = matched.n_pairs();

    double sum = 0.0;
    std::vector<double> diffs;
    diffs.reserve(static_cast<std::size_t>(n));
    for (const auto& [t, c] : matched.pairs) {
        const double d = ds.y(treated[static_cast<std::size_t>(t)]) -
                         ds.y(control[static_cast<std::size_t>(c)]);
        diffs.push_back(d);
        sum += d;
    }

    EffectEstimate est;
    est.method = EffectMethod::diff_means;
    est.n_pairs = n;
    est.confidence_level = confidence_level;
    est.estimate = sum / static_cast<double>(n);

    double ss = 0.0;
    for (double d : diffs) ss += (d - est.estimate) * (d - est.estimate);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    est.standard_error = sd / std::sqrt(static_cast<double>(n));
    est.degenerate_se = !(est.standard_error > 0.0);

    const double zq = detail::normal_quantile(0.5 + confidence_level / 2.0);
    est.ci_lower = est.estimate - zq * est.standard_error;
    est.ci_upper = est.estimate + zq * est.standard_error;
    return est;
}

// Least squares of the outcome on (intercept, Z, covariates) restricted to
// the matched units; classical standard errors and t intervals, with the
// matching treated as fixed.
inline EffectEstimate att_linear_adjusted(const Dataset& ds, const MatchedSet& matched,
                                          const std::vector<std::string>& covariate_names,
                                          double confidence_level = 0.95) {
    if (!ds.has_outcome) throw EstimationError("att_linear_adjusted: dataset has no outcome");
    if (matched.empty()) throw EstimationError("att_linear_adjusted: matched set is empty");

    std::vector<Eigen::Index> covariate_cols;
    for (const auto& name : covariate_names) {
        const auto it =
            std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name);
        if (it == ds.covariate_names.end()) {
            throw InputError("att_linear_adjusted: unknown covariate '" + name + "'");
        }
        covariate_cols.push_back(it - ds.covariate_names.begin());
    }

    const std::vector<int> treated = ds.treated_indices();
    const std::vector<int> control = ds.control_indices();
    std::vector<int> rows;
    rows.reserve(2 * matched.pairs.size());
    for (const auto& [t, c] : matched.pairs) rows.push_back(treated[static_cast<std::size_t>(t)]);
    for (const auto& [t, c] : matched.pairs) rows.push_back(control[static_cast<std::size_t>(c)]);

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(covariate_cols.size());
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int row = rows[static_cast<std::size_t>(r)];
        x(r, 0) = 1.0;
        x(r, 1) = static_cast<double>(ds.z(row));
        for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
            x(r, 2 + static_cast<Eigen::Index>(k)) = ds.covariates(row, covariate_cols[k]);
        }
        y(r) = ds.y(row);
    }

    const detail::OlsFit fit = detail::ols_fit(x, y);

    EffectEstimate est;
    est.method = EffectMethod::linear_adjusted;
    est.n_pairs = matched.n_pairs();
    est.confidence_level = confidence_level;
    est.estimate = fit.coefficients(1);
    est.standard_error = fit.standard_errors(1);
    est.degenerate_se = !(est.standard_error > 0.0);
    const double tq = detail::t_quantile(fit.df_residual, 0.5 + confidence_level / 2.0);
    est.ci_lower = est.estimate - tq * est.standard_error;
    est.ci_upper = est.estimate + tq * est.standard_error;
    return est;
}

}  // namespace dapsm
