#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "dapsm/daps.hpp"
#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/estimation.hpp"
#include "dapsm/propensity.hpp"

namespace dapsm {

enum class ComparatorKind { gold_outcome, gold_ps, naive, naive_coords, distance_caliper };

struct ComparatorSpec {
    ComparatorKind kind = ComparatorKind::naive;
    std::optional<double> distance_quantile;  // required iff kind == distance_caliper
    std::optional<double> ps_caliper;         // in sd of the fitted propensity scores
};

inline void validate_spec(const ComparatorSpec& spec) {
    const bool has_q = spec.distance_quantile.has_value();
    if (has_q != (spec.kind == ComparatorKind::distance_caliper)) {
        throw InputError("distance_quantile must be given exactly for the distance-caliper kind");
    }
    if (has_q && !(*spec.distance_quantile > 0.0 && *spec.distance_quantile < 1.0)) {
        throw InputError("distance_quantile must lie in (0, 1)");
    }
    if (spec.ps_caliper && !(*spec.ps_caliper > 0.0)) {
        throw InputError("ps_caliper must be positive");
    }
}

struct ComparatorResult {
    PropensityFit fit;
    MatchedSet matched;
    Eigen::MatrixXd ps_diff;  // |PS_i - PS_j|, the matching cost
    DistanceMatrix raw_distance;
    std::vector<int> treated_rows;
    std::vector<int> control_rows;
};

namespace detail {

// R's default (type 7) sample quantile: linear interpolation between order
// statistics.
inline double quantile_type7(std::vector<double> values, double q) {
    if (values.empty()) throw InputError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

inline double sample_sd(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v(i) - mean) * (v(i) - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Optimal 1-1 matching on |PS difference|. The PS caliper is expressed in
// standard deviations of the fitted propensity score distribution over all
// units, per the standard matching convention (unlike the DAPS caliper,
// which uses the sd of the pairwise DAPS values).
inline MatchedSet match_on_ps_difference(
    const MatchInputs& inputs, const Eigen::VectorXd& all_fitted_ps,
    std::optional<double> ps_caliper,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* extra_mask) {
    DapsMatrix m;
    m.w = 1.0;
    m.cost = inputs.ps_diff;
    m.feasible = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
        m.cost.rows(), m.cost.cols(), true);
    m.daps_sd = population_sd_finite(m.cost);

    if (ps_caliper) {
        const double threshold = *ps_caliper * sample_sd(all_fitted_ps);
        m.feasible = m.feasible && (inputs.ps_diff.array() <= threshold);
    }
    if (extra_mask) m.feasible = m.feasible && *extra_mask;

    MatchedSet ms = optimal_match(m);
    fill_mean_pair_distance(ms, inputs.raw_distance.values);
    return ms;
}

inline DesignMatrix design_with_u(const Dataset& ds) {
    const DesignMatrix base = make_design(ds);
    DesignMatrix full;
    full.values.resize(base.rows(), base.cols() + 1);
    full.values.leftCols(base.cols()) = base.values;
    full.values.col(base.cols()) = *ds.u;
    full.column_names = base.column_names;
    full.column_names.emplace_back("U");
    return full;
}

}  // namespace detail

// Reference matching methods. gold-outcome is not a matching method and is
// served by gold_outcome_estimate below.
inline ComparatorResult run_comparator(const Dataset& ds, const ComparatorSpec& spec) {
    validate_dataset(ds);
    validate_spec(spec);

    PropensityFit fit;
    switch (spec.kind) {
        case ComparatorKind::naive:
        case ComparatorKind::distance_caliper:
            fit = fit_logistic(make_design(ds), ds.z);
            break;
        case ComparatorKind::naive_coords:
            fit = fit_logistic(augment_with_coordinates(make_design(ds), ds.locations), ds.z);
            break;
        case ComparatorKind::gold_ps:
            if (!ds.u) {
                throw InputError("gold_ps_match: dataset carries no unmeasured confounder");
            }
            fit = fit_logistic(detail::design_with_u(ds), ds.z);
            break;
        case ComparatorKind::gold_outcome:
            throw InputError("gold-outcome has no matched set; use gold_outcome_estimate");
    }

    const Eigen::VectorXd ps = fit.fitted;
    MatchInputs inputs =
        detail::build_match_inputs(ds, fit, ps, DistanceScheme::minmax, true);

    std::optional<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> within;
    if (spec.kind == ComparatorKind::distance_caliper) {
        const Eigen::MatrixXd& d = inputs.raw_distance.values;
        std::vector<double> flat(d.data(), d.data() + d.size());
        const double threshold = detail::quantile_type7(std::move(flat), *spec.distance_quantile);
        within = d.array() <= threshold;
    }

    ComparatorResult result;
    result.matched = detail::match_on_ps_difference(inputs, fit.fitted, spec.ps_caliper,
                                                    within ? &*within : nullptr);
    result.fit = std::move(fit);
    result.ps_diff = std::move(inputs.ps_diff);
    result.raw_distance = std::move(inputs.raw_distance);
    result.treated_rows = std::move(inputs.treated_rows);
    result.control_rows = std::move(inputs.control_rows);
    return result;
}

// Propensity score matching on the observed confounders only.
inline MatchedSet naive_match(const Dataset& ds, std::optional<double> ps_caliper = {}) {
    return run_comparator(ds, {ComparatorKind::naive, {}, ps_caliper}).matched;
}

// As naive_match, with the units' raw coordinates added to the treatment
// model as two fixed-effect columns.
inline MatchedSet naive_coords_match(const Dataset& ds, std::optional<double> ps_caliper = {}) {
    return run_comparator(ds, {ComparatorKind::naive_coords, {}, ps_caliper}).matched;
}

// PS matching restricted to pairs closer than the given quantile of all
// treated-control pairwise distances.
inline MatchedSet distance_caliper_match(const Dataset& ds, double distance_quantile,
                                         std::optional<double> ps_caliper = {}) {
    return run_comparator(ds, {ComparatorKind::distance_caliper, distance_quantile, ps_caliper})
        .matched;
}

// PS matching on the true confounder set (X, U); simulation only.
inline MatchedSet gold_ps_match(const Dataset& ds, std::optional<double> ps_caliper = {}) {
    return run_comparator(ds, {ComparatorKind::gold_ps, {}, ps_caliper}).matched;
}

// Coefficient of Z from least squares of Y on (Z, X, U): the generative
// outcome specification. n_pairs reports the number of units used.
inline EffectEstimate gold_outcome_estimate(const Dataset& ds, double confidence_level = 0.95) {
    validate_dataset(ds);
    if (!ds.u) throw InputError("gold_outcome_estimate: dataset carries no unmeasured confounder");
    if (!ds.has_outcome) throw InputError("gold_outcome_estimate: dataset has no outcome");

    const Eigen::Index n = ds.n();
    const Eigen::Index p = 2 + ds.n_covariates() + 1;
    Eigen::MatrixXd x(n, p);
    x.col(0).setOnes();
    x.col(1) = ds.z.cast<double>();
    x.middleCols(2, ds.n_covariates()) = ds.covariates;
    x.col(p - 1) = *ds.u;

    detail::OlsFit fit;
    try {
        fit = detail::ols_fit(x, ds.y);
    } catch (const EstimationError& e) {
        throw InputError(e.what());
    }

    EffectEstimate est;
    est.method = EffectMethod::linear_adjusted;
    est.n_pairs = static_cast<int>(n);
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
