#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/matched_set.hpp"

namespace dapsm {

struct CovariateBalance {
    std::string name;
    double std_diff_before = 0.0;  // signed
    double std_diff_after = 0.0;   // signed; NaN when no matched pairs
    double asdm_before = 0.0;
    double asdm_after = 0.0;
};

// Per-covariate absolute standardized difference of means, before matching
// and on the matched units, both standardized by the full-data treated-group
// standard deviation so the two columns are comparable.
struct BalanceReport {
    std::vector<CovariateBalance> per_covariate;
    double cutoff = 0.1;
    int n_imbalanced_before = 0;
    int n_imbalanced_after = 0;
    double mean_asdm_after = 0.0;
    double max_asdm_after = 0.0;
    bool after_defined = true;  // false when the matched set is empty
};

namespace detail {

inline double mean_at(const Eigen::VectorXd& values, std::span<const int> idx) {
    double s = 0.0;
    for (int i : idx) s += values(i);
    return s / static_cast<double>(idx.size());
}

// Sample (n-1) standard deviation over a subset of units.
inline double sd_at(const Eigen::VectorXd& values, std::span<const int> idx) {
    const double m = mean_at(values, idx);
    double ss = 0.0;
    for (int i : idx) {
        const double d = values(i) - m;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(idx.size() - 1));
}

}  // namespace detail

inline double asdm(const Eigen::VectorXd& values, std::span<const int> treated_ids,
                   std::span<const int> control_ids, double scale_sd) {
    if (treated_ids.empty() || control_ids.empty()) {
        throw InputError("asdm: both groups must be nonempty");
    }
    if (!(scale_sd > 0.0)) {
        throw InputError("asdm: degenerate covariate, scale standard deviation is zero");
    }
    return std::abs(detail::mean_at(values, treated_ids) - detail::mean_at(values, control_ids)) /
           scale_sd;
}

namespace detail {

inline double signed_std_diff(const Eigen::VectorXd& values, std::span<const int> treated_ids,
                              std::span<const int> control_ids, double scale_sd) {
    return (mean_at(values, treated_ids) - mean_at(values, control_ids)) / scale_sd;
}

// Matched-unit ordinals -> dataset row indices.
inline void matched_rows(const Dataset& ds, const MatchedSet& matched,
                         std::vector<int>& treated_rows, std::vector<int>& control_rows) {
    const std::vector<int> t = ds.treated_indices();
    const std::vector<int> c = ds.control_indices();
    treated_rows.clear();
    control_rows.clear();
    for (const auto& [ti, ci] : matched.pairs) {
        if (ti < 0 || ti >= static_cast<int>(t.size()) || ci < 0 ||
            ci >= static_cast<int>(c.size())) {
            throw InputError("matched set references unit ordinals outside the dataset");
        }
        treated_rows.push_back(t[static_cast<std::size_t>(ti)]);
        control_rows.push_back(c[static_cast<std::size_t>(ci)]);
    }
}

}  // namespace detail

inline BalanceReport balance_report(const Dataset& ds, const MatchedSet& matched, double cutoff) {
    const std::vector<int> treated_all = ds.treated_indices();
    const std::vector<int> control_all = ds.control_indices();
    std::vector<int> treated_matched, control_matched;
    detail::matched_rows(ds, matched, treated_matched, control_matched);

    BalanceReport report;
    report.cutoff = cutoff;
    report.after_defined = !matched.empty();

    const auto add_covariate = [&](const std::string& name, const Eigen::VectorXd& column) {
        const double scale = detail::sd_at(column, treated_all);
        if (!(scale > 0.0)) {
            throw InputError("balance_report: covariate '" + name +
                             "' is constant among treated units");
        }
        CovariateBalance cb;
        cb.name = name;
        cb.std_diff_before = detail::signed_std_diff(column, treated_all, control_all, scale);
        cb.asdm_before = std::abs(cb.std_diff_before);
        if (report.after_defined) {
            cb.std_diff_after =
                detail::signed_std_diff(column, treated_matched, control_matched, scale);
            cb.asdm_after = std::abs(cb.std_diff_after);
        } else {
            cb.std_diff_after = std::numeric_limits<double>::quiet_NaN();
            cb.asdm_after = std::numeric_limits<double>::quiet_NaN();
        }
        report.per_covariate.push_back(std::move(cb));
    };

    for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
        add_covariate(ds.covariate_names[static_cast<std::size_t>(k)], ds.covariates.col(k));
    }

    for (const auto& cb : report.per_covariate) {
        if (cb.asdm_before > cutoff) ++report.n_imbalanced_before;
        if (report.after_defined && cb.asdm_after > cutoff) ++report.n_imbalanced_after;
    }
    if (report.after_defined && !report.per_covariate.empty()) {
        double sum = 0.0, mx = 0.0;
        for (const auto& cb : report.per_covariate) {
            sum += cb.asdm_after;
            mx = std::max(mx, cb.asdm_after);
        }
        report.mean_asdm_after = sum / static_cast<double>(report.per_covariate.size());
        report.max_asdm_after = mx;
    } else {
        report.mean_asdm_after = std::numeric_limits<double>::quiet_NaN();
        report.max_asdm_after = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

}  // namespace dapsm
