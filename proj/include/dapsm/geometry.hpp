#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dapsm/errors.hpp"

namespace dapsm {

// Mean earth radius in km; pairs with the haversine formula below.
inline constexpr double kEarthRadiusKm = 6371.0088;

enum class DistanceMetric { euclidean, geodesic };
enum class DistanceScheme { minmax, ecdf };

// A unit's position. For the geodesic metric x is longitude and y is
// latitude, both in degrees; for the Euclidean metric the units are abstract.
struct Location {
    double x = 0.0;
    double y = 0.0;
};

// Raw treated-by-control distances: km for geodesic, input units otherwise.
struct DistanceMatrix {
    Eigen::MatrixXd values;
    DistanceMetric metric = DistanceMetric::euclidean;

    Eigen::Index treated_count() const { return values.rows(); }
    Eigen::Index control_count() const { return values.cols(); }
};

// Distances mapped onto [0, 1] so they are commensurate with propensity
// score differences.
struct StandardizedDistanceMatrix {
    Eigen::MatrixXd values;
    DistanceScheme scheme = DistanceScheme::minmax;
};

namespace detail {

inline double haversine_km(const Location& a, const Location& b) {
    constexpr double rad = M_PI / 180.0;
    const double lon1 = a.x * rad, lat1 = a.y * rad;
    const double lon2 = b.x * rad, lat2 = b.y * rad;
    const double sdlat = std::sin(0.5 * (lat2 - lat1));
    const double sdlon = std::sin(0.5 * (lon2 - lon1));
    const double h = sdlat * sdlat + std::cos(lat1) * std::cos(lat2) * sdlon * sdlon;
    return kEarthRadiusKm * 2.0 * std::asin(std::sqrt(std::min(1.0, h)));
}

inline double euclidean(const Location& a, const Location& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

inline void check_coordinates(std::span<const Location> points, DistanceMetric metric,
                              const char* which) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Location& p = points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw InputError(std::string(which) + " location " + std::to_string(i) +
                             " has non-finite coordinates");
        }
        if (metric == DistanceMetric::geodesic &&
            (p.y < -90.0 || p.y > 90.0 || p.x < -180.0 || p.x > 180.0)) {
            throw InputError(std::string(which) + " location " + std::to_string(i) +
                             " is outside valid lon/lat ranges");
        }
    }
}

}  // namespace detail

inline DistanceMatrix pairwise_distances(std::span<const Location> treated,
                                         std::span<const Location> control,
                                         DistanceMetric metric) {
    if (treated.empty() || control.empty()) {
        throw InputError("pairwise_distances requires nonempty treated and control lists");
    }
    detail::check_coordinates(treated, metric, "treated");
    detail::check_coordinates(control, metric, "control");

    DistanceMatrix out;
    out.metric = metric;
    out.values.resize(static_cast<Eigen::Index>(treated.size()),
                      static_cast<Eigen::Index>(control.size()));
    for (std::size_t i = 0; i < treated.size(); ++i) {
        for (std::size_t j = 0; j < control.size(); ++j) {
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                metric == DistanceMetric::geodesic ? detail::haversine_km(treated[i], control[j])
                                                   : detail::euclidean(treated[i], control[j]);
        }
    }
    return out;
}

inline DistanceMatrix pairwise_distances(const std::vector<Location>& treated,
                                         const std::vector<Location>& control,
                                         DistanceMetric metric) {
    return pairwise_distances(std::span<const Location>(treated),
                              std::span<const Location>(control), metric);
}

// (d - min) / (max - min) over all treated-control pairs.
inline StandardizedDistanceMatrix standardize_minmax(const DistanceMatrix& d) {
    if (d.values.size() == 0) throw InputError("standardize_minmax: empty distance matrix");
    const double lo = d.values.minCoeff();
    const double hi = d.values.maxCoeff();
    if (!(hi > lo)) {
        throw DegenerateScaleError(
            "all treated-control pairs are equidistant; min-max standardization is undefined "
            "(run with w = 1 to match on the propensity score alone)");
    }
    StandardizedDistanceMatrix out;
    out.scheme = DistanceScheme::minmax;
    out.values = (d.values.array() - lo) / (hi - lo);
    return out;
}

// Empirical CDF of all treated-control pairwise distances, evaluated with a
// non-strict inequality: entry_ij = #{(k,l): d_kl <= d_ij} / (nT * nC).
inline StandardizedDistanceMatrix standardize_ecdf(const DistanceMatrix& d) {
    const Eigen::Index total = d.values.size();
    if (total == 0) throw InputError("standardize_ecdf: empty distance matrix");

    std::vector<double> sorted(d.values.data(), d.values.data() + total);
    std::sort(sorted.begin(), sorted.end());

    StandardizedDistanceMatrix out;
    out.scheme = DistanceScheme::ecdf;
    out.values.resizeLike(d.values);
    const double denom = static_cast<double>(total);
    for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
            const auto it = std::upper_bound(sorted.begin(), sorted.end(), d.values(i, j));
            out.values(i, j) = static_cast<double>(it - sorted.begin()) / denom;
        }
    }
    return out;
}

inline StandardizedDistanceMatrix standardize(const DistanceMatrix& d, DistanceScheme scheme) {
    return scheme == DistanceScheme::minmax ? standardize_minmax(d) : standardize_ecdf(d);
}

}  // namespace dapsm
