#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dapsm/errors.hpp"
#include "dapsm/geometry.hpp"

namespace dapsm {

// Spatially-indexed units with covariates, binary treatment and (optionally)
// a continuous outcome. Simulated datasets additionally carry the unmeasured
// confounder and the generative treatment probability.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<Location> locations;
    DistanceMetric metric = DistanceMetric::euclidean;

    Eigen::MatrixXd covariates;  // n x p, observed confounders only
    std::vector<std::string> covariate_names;

    Eigen::VectorXi z;  // 0/1 treatment
    Eigen::VectorXd y;  // outcome; empty when has_outcome is false
    bool has_outcome = false;

    std::optional<Eigen::VectorXd> u;        // unmeasured confounder (simulation)
    std::optional<Eigen::VectorXd> true_ps;  // generative P(Z=1) (simulation)
    std::uint64_t seed = 0;

    Eigen::Index n() const { return z.size(); }
    Eigen::Index n_covariates() const { return covariates.cols(); }

    std::vector<int> treated_indices() const {
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (z(i) == 1) idx.push_back(static_cast<int>(i));
        return idx;
    }

    std::vector<int> control_indices() const {
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (z(i) == 0) idx.push_back(static_cast<int>(i));
        return idx;
    }

    std::vector<Location> treated_locations() const {
        std::vector<Location> out;
        for (int i : treated_indices()) out.push_back(locations[static_cast<std::size_t>(i)]);
        return out;
    }

    std::vector<Location> control_locations() const {
        std::vector<Location> out;
        for (int i : control_indices()) out.push_back(locations[static_cast<std::size_t>(i)]);
        return out;
    }
};

inline void validate_dataset(const Dataset& ds) {
    const auto n = ds.n();
    if (n == 0) throw InputError("dataset is empty");
    if (static_cast<Eigen::Index>(ds.ids.size()) != n ||
        static_cast<Eigen::Index>(ds.locations.size()) != n || ds.covariates.rows() != n) {
        throw InputError("dataset field lengths disagree");
    }
    if (ds.has_outcome && ds.y.size() != n) throw InputError("outcome length disagrees");
    if (ds.covariates.cols() != static_cast<Eigen::Index>(ds.covariate_names.size())) {
        throw InputError("covariate names do not match covariate columns");
    }
    if (ds.u && ds.u->size() != n) throw InputError("unmeasured confounder length disagrees");

    std::unordered_set<std::string> seen;
    for (const auto& id : ds.ids) {
        if (!seen.insert(id).second) throw InputError("duplicate unit id: " + id);
    }
    bool any_treated = false, any_control = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ds.z(i) != 0 && ds.z(i) != 1) {
            throw InputError("treatment must be 0/1 (unit " + ds.ids[static_cast<std::size_t>(i)] +
                             ")");
        }
        (ds.z(i) == 1 ? any_treated : any_control) = true;
    }
    if (!any_treated || !any_control) {
        throw InputError("dataset needs at least one treated and one control unit");
    }
    for (Eigen::Index i = 0; i < ds.covariates.size(); ++i) {
        if (!std::isfinite(ds.covariates.data()[i])) {
            throw InputError("covariates contain non-finite values");
        }
    }
}

}  // namespace dapsm
