#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"

namespace dapsm {

// Treatment-assignment design: intercept column first, then covariates,
// optionally followed by raw coordinates.
struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

struct PropensityFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd fitted;  // strictly inside (0, 1)
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::vector<std::string> column_names;
};

inline double expit(double eta) {
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// Intercept + observed covariates.
inline DesignMatrix make_design(const Dataset& ds) {
    DesignMatrix design;
    design.values.resize(ds.n(), ds.n_covariates() + 1);
    design.values.col(0).setOnes();
    design.values.rightCols(ds.n_covariates()) = ds.covariates;
    design.column_names.reserve(static_cast<std::size_t>(ds.n_covariates()) + 1);
    design.column_names.emplace_back("(intercept)");
    design.column_names.insert(design.column_names.end(), ds.covariate_names.begin(),
                               ds.covariate_names.end());
    return design;
}

// Appends the raw coordinates as two extra columns, untransformed.
inline DesignMatrix augment_with_coordinates(const DesignMatrix& design,
                                             const std::vector<Location>& locations) {
    if (static_cast<Eigen::Index>(locations.size()) != design.rows()) {
        throw InputError("augment_with_coordinates: location count does not match design rows");
    }
    DesignMatrix out;
    out.values.resize(design.rows(), design.cols() + 2);
    out.values.leftCols(design.cols()) = design.values;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        out.values(i, design.cols()) = locations[static_cast<std::size_t>(i)].x;
        out.values(i, design.cols() + 1) = locations[static_cast<std::size_t>(i)].y;
    }
    out.column_names = design.column_names;
    out.column_names.emplace_back("coord_x");
    out.column_names.emplace_back("coord_y");
    return out;
}

namespace detail {

constexpr double kIrlsScoreTol = 1e-8;
constexpr double kIrlsStepTol = 1e-10;
constexpr int kIrlsMaxIterations = 50;
constexpr double kSeparationCoefBound = 30.0;

inline void check_full_rank(const Eigen::MatrixXd& x) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) {
        throw InputError("design matrix is rank deficient after dropping constant columns");
    }
}

}  // namespace detail

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares. Converges when the score norm drops below 1e-8 and the Newton
// step below 1e-10; diverging coefficients are reported as separation.
inline PropensityFit fit_logistic(const DesignMatrix& design, const Eigen::VectorXi& z) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (z.size() != n) throw InputError("fit_logistic: treatment length does not match design");
    if (n <= p) throw InputError("fit_logistic: more columns than observations");

    int ones = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (z(i) != 0 && z(i) != 1) throw InputError("fit_logistic: treatment must be 0/1");
        ones += z(i);
    }
    if (ones == 0 || ones == n) {
        throw InputError("fit_logistic: treatment vector contains a single class");
    }
    detail::check_full_rank(design.values);

    const Eigen::MatrixXd& x = design.values;
    const Eigen::VectorXd zd = z.cast<double>();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta(n), prob(n), weight(n);
    double step_norm = std::numeric_limits<double>::infinity();

    PropensityFit fit;
    fit.column_names = design.column_names;

    for (int it = 0; it <= detail::kIrlsMaxIterations; ++it) {
        eta.noalias() = x * beta;
        for (Eigen::Index i = 0; i < n; ++i) prob(i) = expit(eta(i));
        const Eigen::VectorXd score = x.transpose() * (zd - prob);
        const double score_norm = score.norm();

        if (beta.cwiseAbs().maxCoeff() > detail::kSeparationCoefBound) {
            throw SeparationError(
                "fit_logistic: coefficients diverged; treatment appears separable");
        }
        if (score_norm <= detail::kIrlsScoreTol && step_norm <= detail::kIrlsStepTol) {
            fit.converged = true;
            fit.iterations = it;
            fit.gradient_norm = score_norm;
            break;
        }
        if (it == detail::kIrlsMaxIterations) {
            throw ConvergenceError("fit_logistic: no convergence after " +
                                   std::to_string(detail::kIrlsMaxIterations) + " iterations");
        }

        for (Eigen::Index i = 0; i < n; ++i) {
            weight(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-10);
        }
        const Eigen::MatrixXd hessian =
            x.transpose() * weight.asDiagonal() * x;  // Fisher information
        const Eigen::VectorXd delta = hessian.ldlt().solve(score);
        if (!delta.allFinite()) {
            throw NumericalError("fit_logistic: IRLS step failed to solve");
        }
        beta += delta;
        step_norm = delta.norm();
    }

    fit.coefficients = beta;
    fit.fitted.resize(n);
    eta.noalias() = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
        fit.fitted(i) = std::clamp(expit(eta(i)), 1e-12, 1.0 - 1e-12);
    }
    return fit;
}

inline Eigen::VectorXd predict_ps(const PropensityFit& fit, const DesignMatrix& design) {
    if (design.cols() != fit.coefficients.size() || design.column_names != fit.column_names) {
        throw InputError("predict_ps: design column layout does not match the fit");
    }
    Eigen::VectorXd eta = design.values * fit.coefficients;
    Eigen::VectorXd out(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        out(i) = std::clamp(expit(eta(i)), 1e-12, 1.0 - 1e-12);
    }
    return out;
}

// Bernoulli log-likelihood of a coefficient vector; used by diagnostics and
// by the finite-difference checks in the test suite.
inline double logistic_log_likelihood(const DesignMatrix& design, const Eigen::VectorXi& z,
                                      const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design.values * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(p) or log(1-p), written to stay finite for large |eta|
        const double log1pe = eta(i) > 30.0 ? eta(i) : std::log1p(std::exp(eta(i)));
        ll += (z(i) == 1 ? eta(i) : 0.0) - log1pe;
    }
    return ll;
}

}  // namespace dapsm
