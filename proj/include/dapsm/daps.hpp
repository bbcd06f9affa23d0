#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dapsm/assignment.hpp"
#include "dapsm/balance.hpp"
#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/geometry.hpp"
#include "dapsm/matched_set.hpp"
#include "dapsm/propensity.hpp"

namespace dapsm {

enum class CaliperType { daps, ps_component, distance_component };
enum class MatchAlgorithm { greedy, optimal };
enum class WMethod { grid, bisection };

inline std::vector<double> default_w_grid() {
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) grid[static_cast<std::size_t>(i)] = i / 100.0;
    return grid;
}

struct DapsConfig {
    std::optional<double> fixed_w;  // nullopt: select the weight from balance
    WMethod w_method = WMethod::grid;
    std::vector<double> w_grid = default_w_grid();
    double bisection_tolerance = 0.001;
    double asdm_cutoff = 0.1;
    bool full_grid_scan = false;  // keep scanning past the first balanced w

    std::optional<double> caliper;  // in standard deviations of the calipered quantity
    CaliperType caliper_type = CaliperType::daps;
    DistanceScheme distance_scheme = DistanceScheme::minmax;
    MatchAlgorithm algorithm = MatchAlgorithm::optimal;
};

inline void validate_config(const DapsConfig& config) {
    if (config.fixed_w && (!(*config.fixed_w >= 0.0) || !(*config.fixed_w <= 1.0))) {
        throw InputError("w must lie in [0, 1]");
    }
    if (config.caliper && !(*config.caliper > 0.0)) {
        throw InputError("caliper must be positive");
    }
    if (!(config.bisection_tolerance > 0.0)) {
        throw InputError("bisection tolerance must be positive");
    }
    if (!(config.asdm_cutoff >= 0.0)) {
        throw InputError("ASDM cutoff must be nonnegative");
    }
    if (config.w_grid.empty()) throw InputError("w grid is empty");
    for (std::size_t i = 0; i < config.w_grid.size(); ++i) {
        const double w = config.w_grid[i];
        if (!(w >= 0.0) || !(w <= 1.0)) throw InputError("w grid values must lie in [0, 1]");
        if (i > 0 && !(w > config.w_grid[i - 1])) {
            throw InputError("w grid must be sorted strictly ascending");
        }
    }
}

// Treated-by-control DAPS costs with a feasibility mask. daps_sd is the
// population standard deviation of all finite pre-masking cells, which is
// what the caliper is expressed in.
struct DapsMatrix {
    Eigen::MatrixXd cost;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> feasible;
    double w = 1.0;
    double daps_sd = 0.0;
};

struct WSelection {
    double chosen_w = 0.0;
    std::vector<WTrajectoryPoint> trajectory;
    double cutoff = 0.1;
    WMethod method = WMethod::grid;
};

namespace detail {

inline double population_sd_finite(const Eigen::MatrixXd& m) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (std::isfinite(v)) {
            sum += v;
            ++count;
        }
    }
    if (count == 0) return 0.0;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (std::isfinite(v)) {
            const double d = v - mean;
            ss += d * d;
        }
    }
    return std::sqrt(ss / static_cast<double>(count));
}

}  // namespace detail

// DAPS_ij = w * |PS_i - PS_j| + (1 - w) * Dist_ij. The w = 1 and w = 0
// endpoints copy the corresponding component matrix so the stated
// equivalences hold exactly, not just up to rounding.
inline DapsMatrix compute_daps(const Eigen::VectorXd& ps_treated,
                               const Eigen::VectorXd& ps_control,
                               const StandardizedDistanceMatrix& std_dist, double w) {
    if (!(w >= 0.0) || !(w <= 1.0)) throw InputError("compute_daps: w must lie in [0, 1]");
    const Eigen::Index n_t = ps_treated.size();
    const Eigen::Index n_c = ps_control.size();
    if (std_dist.values.rows() != n_t || std_dist.values.cols() != n_c) {
        throw InputError("compute_daps: distance matrix dimensions do not match PS vectors");
    }
    for (Eigen::Index i = 0; i < n_t; ++i) {
        if (!(ps_treated(i) > 0.0 && ps_treated(i) < 1.0)) {
            throw InputError("compute_daps: treated propensity scores must lie in (0, 1)");
        }
    }
    for (Eigen::Index j = 0; j < n_c; ++j) {
        if (!(ps_control(j) > 0.0 && ps_control(j) < 1.0)) {
            throw InputError("compute_daps: control propensity scores must lie in (0, 1)");
        }
    }

    DapsMatrix m;
    m.w = w;
    m.cost.resize(n_t, n_c);
    if (w == 0.0) {
        m.cost = std_dist.values;
    } else {
        for (Eigen::Index i = 0; i < n_t; ++i) {
            for (Eigen::Index j = 0; j < n_c; ++j) {
                const double ps_diff = std::abs(ps_treated(i) - ps_control(j));
                m.cost(i, j) =
                    w == 1.0 ? ps_diff : w * ps_diff + (1.0 - w) * std_dist.values(i, j);
            }
        }
    }
    m.feasible = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_t, n_c, true);
    m.daps_sd = detail::population_sd_finite(m.cost);
    return m;
}

// Marks cells whose calipered component exceeds caliper * component_sd as
// infeasible. Non-finite components are always infeasible.
inline DapsMatrix apply_caliper(const DapsMatrix& m, const DapsConfig& config,
                                const Eigen::MatrixXd& ps_diff,
                                const StandardizedDistanceMatrix& std_dist) {
    if (!config.caliper) throw InputError("apply_caliper: config has no caliper");
    const double k = *config.caliper;

    const Eigen::MatrixXd* component = nullptr;
    double component_sd = 0.0;
    switch (config.caliper_type) {
        case CaliperType::daps:
            component = &m.cost;
            component_sd = m.daps_sd;
            break;
        case CaliperType::ps_component:
            component = &ps_diff;
            component_sd = detail::population_sd_finite(ps_diff);
            break;
        case CaliperType::distance_component:
            component = &std_dist.values;
            component_sd = detail::population_sd_finite(std_dist.values);
            break;
    }
    if (component->rows() != m.cost.rows() || component->cols() != m.cost.cols()) {
        throw InputError("apply_caliper: component matrix dimensions do not match");
    }

    DapsMatrix out = m;
    const double threshold = k * component_sd;  // +inf caliper leaves the mask unchanged
    for (Eigen::Index i = 0; i < m.cost.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cost.cols(); ++j) {
            const double c = (*component)(i, j);
            if (!std::isfinite(c) || c > threshold) out.feasible(i, j) = false;
        }
    }
    return out;
}

namespace detail {

inline void finalize_matched_set(MatchedSet& ms, const Eigen::MatrixXd& cost) {
    std::sort(ms.pairs.begin(), ms.pairs.end());
    std::sort(ms.dropped_treated.begin(), ms.dropped_treated.end());
    ms.total_cost = 0.0;
    for (const auto& [t, c] : ms.pairs) ms.total_cost += cost(t, c);
}

}  // namespace detail

// Greedy matching: repeatedly order the remaining rows by their minimum
// feasible cost, match rows in that order up to the first control that
// repeats, then recompute on the reduced matrix. Rows whose minimum is
// infinite are dropped at each recomputation.
inline MatchedSet greedy_match(const DapsMatrix& m) {
    const Eigen::Index n_t = m.cost.rows();
    const Eigen::Index n_c = m.cost.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();

    MatchedSet ms;
    std::vector<int> remaining;
    remaining.reserve(static_cast<std::size_t>(n_t));
    for (int i = 0; i < n_t; ++i) remaining.push_back(i);
    std::vector<char> col_available(static_cast<std::size_t>(n_c), 1);

    struct RowMin {
        int row;
        double value;
        int argmin;
    };

    while (!remaining.empty()) {
        std::vector<RowMin> mins;
        mins.reserve(remaining.size());
        for (int row : remaining) {
            double best = inf;
            int best_j = -1;
            for (int j = 0; j < n_c; ++j) {
                if (!col_available[static_cast<std::size_t>(j)] || !m.feasible(row, j)) continue;
                const double c = m.cost(row, j);
                if (std::isfinite(c) && c < best) {
                    best = c;
                    best_j = j;
                }
            }
            if (best_j == -1) {
                ms.dropped_treated.push_back(row);
            } else {
                mins.push_back({row, best, best_j});
            }
        }
        if (mins.empty()) break;

        std::stable_sort(mins.begin(), mins.end(), [](const RowMin& a, const RowMin& b) {
            if (a.value != b.value) return a.value < b.value;
            return a.row < b.row;
        });

        std::vector<char> used_this_pass(static_cast<std::size_t>(n_c), 0);
        std::vector<int> still_remaining;
        bool conflict = false;
        for (std::size_t k = 0; k < mins.size(); ++k) {
            const RowMin& rm = mins[k];
            if (!conflict && !used_this_pass[static_cast<std::size_t>(rm.argmin)]) {
                ms.pairs.emplace_back(rm.row, rm.argmin);
                used_this_pass[static_cast<std::size_t>(rm.argmin)] = 1;
                col_available[static_cast<std::size_t>(rm.argmin)] = 0;
            } else {
                conflict = true;  // stop matching at the first repeated control
                still_remaining.push_back(rm.row);
            }
        }
        std::sort(still_remaining.begin(), still_remaining.end());
        remaining = std::move(still_remaining);
    }

    detail::finalize_matched_set(ms, m.cost);
    return ms;
}

// Exact optimal matching: maximizes the number of matched treated units,
// then minimizes total DAPS among matchings of that size.
inline MatchedSet optimal_match(const DapsMatrix& m) {
    const AssignmentResult assignment = min_cost_assignment(m.cost, &m.feasible);
    MatchedSet ms;
    for (int i = 0; i < static_cast<int>(assignment.row_to_col.size()); ++i) {
        const int j = assignment.row_to_col[static_cast<std::size_t>(i)];
        if (j >= 0) {
            ms.pairs.emplace_back(i, j);
        } else {
            ms.dropped_treated.push_back(i);
        }
    }
    detail::finalize_matched_set(ms, m.cost);
    return ms;
}

inline MatchedSet run_match(const DapsMatrix& m, MatchAlgorithm algorithm) {
    return algorithm == MatchAlgorithm::greedy ? greedy_match(m) : optimal_match(m);
}

// Everything the matching pipeline derives once per dataset and reuses
// across candidate weights.
struct MatchInputs {
    PropensityFit fit;
    Eigen::VectorXd ps_treated;
    Eigen::VectorXd ps_control;
    Eigen::MatrixXd ps_diff;  // |PS_i - PS_j|
    DistanceMatrix raw_distance;
    StandardizedDistanceMatrix std_dist;
    bool degenerate_distance_scale = false;
    std::vector<int> treated_rows;  // ordinal -> dataset row
    std::vector<int> control_rows;
};

namespace detail {

inline Eigen::MatrixXd abs_ps_difference(const Eigen::VectorXd& ps_treated,
                                         const Eigen::VectorXd& ps_control) {
    Eigen::MatrixXd out(ps_treated.size(), ps_control.size());
    for (Eigen::Index i = 0; i < ps_treated.size(); ++i) {
        for (Eigen::Index j = 0; j < ps_control.size(); ++j) {
            out(i, j) = std::abs(ps_treated(i) - ps_control(j));
        }
    }
    return out;
}

inline void fill_mean_pair_distance(MatchedSet& ms, const Eigen::MatrixXd& raw_distance) {
    if (ms.pairs.empty()) {
        ms.mean_pair_distance = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    double sum = 0.0;
    for (const auto& [t, c] : ms.pairs) sum += raw_distance(t, c);
    ms.mean_pair_distance = sum / static_cast<double>(ms.pairs.size());
}

// PS fit on the observed covariates, pairwise distances and their
// standardization. A degenerate distance scale is tolerated only when the
// caller can proceed without the distance component (w = 1).
inline MatchInputs build_match_inputs(const Dataset& ds, const PropensityFit& fit,
                                      const Eigen::VectorXd& ps, DistanceScheme scheme,
                                      bool tolerate_degenerate_scale) {
    MatchInputs inputs;
    inputs.fit = fit;
    inputs.treated_rows = ds.treated_indices();
    inputs.control_rows = ds.control_indices();

    inputs.ps_treated.resize(static_cast<Eigen::Index>(inputs.treated_rows.size()));
    for (std::size_t k = 0; k < inputs.treated_rows.size(); ++k) {
        inputs.ps_treated(static_cast<Eigen::Index>(k)) = ps(inputs.treated_rows[k]);
    }
    inputs.ps_control.resize(static_cast<Eigen::Index>(inputs.control_rows.size()));
    for (std::size_t k = 0; k < inputs.control_rows.size(); ++k) {
        inputs.ps_control(static_cast<Eigen::Index>(k)) = ps(inputs.control_rows[k]);
    }
    inputs.ps_diff = abs_ps_difference(inputs.ps_treated, inputs.ps_control);

    inputs.raw_distance =
        pairwise_distances(ds.treated_locations(), ds.control_locations(), ds.metric);
    try {
        inputs.std_dist = standardize(inputs.raw_distance, scheme);
    } catch (const DegenerateScaleError&) {
        if (!tolerate_degenerate_scale) throw;
        inputs.std_dist.scheme = scheme;
        inputs.std_dist.values = Eigen::MatrixXd::Zero(inputs.raw_distance.values.rows(),
                                                       inputs.raw_distance.values.cols());
        inputs.degenerate_distance_scale = true;
    }
    return inputs;
}

inline MatchInputs build_match_inputs(const Dataset& ds, DistanceScheme scheme,
                                      bool tolerate_degenerate_scale) {
    const DesignMatrix design = make_design(ds);
    PropensityFit fit = fit_logistic(design, ds.z);
    const Eigen::VectorXd ps = fit.fitted;
    return build_match_inputs(ds, fit, ps, scheme, tolerate_degenerate_scale);
}

struct WEvaluation {
    MatchedSet matched;
    double max_asdm = std::numeric_limits<double>::infinity();
    int n_imbalanced = 0;
    bool balanced = false;
};

// Match at a given w and measure observed-covariate balance on the result.
// An empty matched set counts as unbalanced on every covariate.
inline WEvaluation evaluate_w(const Dataset& ds, const MatchInputs& inputs,
                              const DapsConfig& config, double w, double cutoff,
                              const std::vector<double>& treated_sd) {
    WEvaluation eval;
    DapsMatrix daps = compute_daps(inputs.ps_treated, inputs.ps_control, inputs.std_dist, w);
    if (config.caliper) daps = apply_caliper(daps, config, inputs.ps_diff, inputs.std_dist);
    eval.matched = run_match(daps, config.algorithm);

    const int p = static_cast<int>(ds.n_covariates());
    if (eval.matched.empty()) {
        eval.max_asdm = std::numeric_limits<double>::infinity();
        eval.n_imbalanced = p;
        eval.balanced = false;
        return eval;
    }

    eval.max_asdm = 0.0;
    for (int k = 0; k < p; ++k) {
        double mean_t = 0.0, mean_c = 0.0;
        for (const auto& [t, c] : eval.matched.pairs) {
            mean_t += ds.covariates(inputs.treated_rows[static_cast<std::size_t>(t)], k);
            mean_c += ds.covariates(inputs.control_rows[static_cast<std::size_t>(c)], k);
        }
        const double n = static_cast<double>(eval.matched.pairs.size());
        const double a = std::abs(mean_t - mean_c) / n / treated_sd[static_cast<std::size_t>(k)];
        eval.max_asdm = std::max(eval.max_asdm, a);
        if (a > cutoff) ++eval.n_imbalanced;
    }
    eval.balanced = eval.n_imbalanced == 0;
    return eval;
}

inline std::vector<double> full_data_treated_sd(const Dataset& ds) {
    const std::vector<int> treated = ds.treated_indices();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(ds.n_covariates()));
    for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
        const double sd = sd_at(ds.covariates.col(k), treated);
        if (!(sd > 0.0)) {
            throw InputError("covariate '" + ds.covariate_names[static_cast<std::size_t>(k)] +
                             "' is constant among treated units; ASDM is undefined");
        }
        out.push_back(sd);
    }
    return out;
}

inline WTrajectoryPoint trajectory_point(double w, const WEvaluation& eval) {
    WTrajectoryPoint pt;
    pt.w = w;
    pt.max_asdm = eval.max_asdm;
    pt.balanced = eval.balanced;
    pt.n_imbalanced = eval.n_imbalanced;
    pt.n_pairs = eval.matched.n_pairs();
    return pt;
}

// Ascending scan for the smallest grid w whose matched set balances every
// observed covariate. Stops at the first success unless a full scan was
// requested (the full trajectory is what balance-versus-w plots consume).
inline WSelection select_w_grid_impl(const Dataset& ds, const MatchInputs& inputs,
                                     const DapsConfig& config, const std::vector<double>& w_grid,
                                     double cutoff, std::vector<MatchedSet>* kept_matches) {
    const std::vector<double> treated_sd = full_data_treated_sd(ds);
    WSelection selection;
    selection.method = WMethod::grid;
    selection.cutoff = cutoff;

    std::optional<double> chosen;
    for (double w : w_grid) {
        const WEvaluation eval = evaluate_w(ds, inputs, config, w, cutoff, treated_sd);
        selection.trajectory.push_back(trajectory_point(w, eval));
        if (kept_matches) kept_matches->push_back(eval.matched);
        if (eval.balanced && !chosen) {
            chosen = w;
            if (!config.full_grid_scan) break;
        }
    }
    if (!chosen) {
        throw NoBalancedWError("no w in the grid balances all observed covariates at cutoff " +
                                   std::to_string(cutoff),
                               selection.trajectory);
    }
    selection.chosen_w = *chosen;
    return selection;
}

// Halving search from w = 0.5: step down when balance holds, up when it
// does not, halving the step each iteration until it falls below the
// tolerance. Assumes ASDM is non-increasing in w.
inline WSelection select_w_bisection_impl(const Dataset& ds, const MatchInputs& inputs,
                                          const DapsConfig& config, double tolerance,
                                          double cutoff) {
    if (!(tolerance > 0.0)) throw InputError("bisection tolerance must be positive");
    const std::vector<double> treated_sd = full_data_treated_sd(ds);
    WSelection selection;
    selection.method = WMethod::bisection;
    selection.cutoff = cutoff;

    std::optional<double> last_balanced;
    double w = 0.5;
    for (int k = 1;; ++k) {
        const WEvaluation eval = evaluate_w(ds, inputs, config, w, cutoff, treated_sd);
        selection.trajectory.push_back(trajectory_point(w, eval));
        if (eval.balanced) last_balanced = w;
        const double step = std::ldexp(1.0, -(k + 1));
        if (step < tolerance) break;
        w += eval.balanced ? -step : step;
    }
    if (!last_balanced) {
        throw NoBalancedWError("no visited w balances all observed covariates at cutoff " +
                                   std::to_string(cutoff),
                               selection.trajectory);
    }
    selection.chosen_w = *last_balanced;
    return selection;
}

}  // namespace detail

inline WSelection select_w_grid(const Dataset& ds, const DapsConfig& config,
                                const std::vector<double>& w_grid, double asdm_cutoff) {
    validate_dataset(ds);
    const MatchInputs inputs =
        detail::build_match_inputs(ds, config.distance_scheme, false);
    return detail::select_w_grid_impl(ds, inputs, config, w_grid, asdm_cutoff, nullptr);
}

inline WSelection select_w_bisection(const Dataset& ds, const DapsConfig& config,
                                     double tolerance, double asdm_cutoff) {
    validate_dataset(ds);
    const MatchInputs inputs =
        detail::build_match_inputs(ds, config.distance_scheme, false);
    return detail::select_w_bisection_impl(ds, inputs, config, tolerance, asdm_cutoff);
}

// Full pipeline output; intermediate artifacts are kept so callers can
// inspect or serialize any stage.
struct DapsmResult {
    PropensityFit fit;
    MatchedSet matched;
    std::optional<WSelection> w_selection;
    double w_used = 1.0;
    DapsMatrix daps;
    DistanceMatrix raw_distance;
    StandardizedDistanceMatrix std_dist;
    Eigen::MatrixXd ps_diff;
    std::vector<int> treated_rows;
    std::vector<int> control_rows;
    std::vector<MatchedSet> grid_matches;  // per-grid-point matches on a full scan
};

// fit PS on X -> pairwise distances -> standardize -> (optionally select w)
// -> DAPS -> caliper -> match.
inline DapsmResult dapsm(const Dataset& ds, const DapsConfig& config) {
    validate_dataset(ds);
    validate_config(config);

    const bool w_is_fixed_one = config.fixed_w && *config.fixed_w == 1.0;
    const bool needs_distance_scale =
        !w_is_fixed_one ||
        (config.caliper && config.caliper_type == CaliperType::distance_component);
    MatchInputs inputs =
        detail::build_match_inputs(ds, config.distance_scheme, !needs_distance_scale);

    DapsmResult result;
    result.fit = inputs.fit;
    result.treated_rows = inputs.treated_rows;
    result.control_rows = inputs.control_rows;

    if (config.fixed_w) {
        result.w_used = *config.fixed_w;
    } else {
        std::vector<MatchedSet>* keep =
            config.full_grid_scan && config.w_method == WMethod::grid ? &result.grid_matches
                                                                      : nullptr;
        result.w_selection =
            config.w_method == WMethod::grid
                ? detail::select_w_grid_impl(ds, inputs, config, config.w_grid,
                                             config.asdm_cutoff, keep)
                : detail::select_w_bisection_impl(ds, inputs, config,
                                                  config.bisection_tolerance, config.asdm_cutoff);
        result.w_used = result.w_selection->chosen_w;
    }

    result.daps = compute_daps(inputs.ps_treated, inputs.ps_control, inputs.std_dist,
                               result.w_used);
    if (config.caliper) {
        result.daps = apply_caliper(result.daps, config, inputs.ps_diff, inputs.std_dist);
    }
    result.matched = run_match(result.daps, config.algorithm);
    detail::fill_mean_pair_distance(result.matched, inputs.raw_distance.values);

    result.raw_distance = std::move(inputs.raw_distance);
    result.std_dist = std::move(inputs.std_dist);
    result.ps_diff = std::move(inputs.ps_diff);
    return result;
}

}  // namespace dapsm
