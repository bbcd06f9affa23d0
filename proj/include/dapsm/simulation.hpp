#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dapsm/comparators.hpp"
#include "dapsm/daps.hpp"
#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/geometry.hpp"
#include "dapsm/rng.hpp"

namespace dapsm {

struct MaternParams {
    double nu = 1.0;  // smoothness
    double r = 1.0;   // range, in location units
};

namespace detail {

// 2^(1-nu)/Gamma(nu) * x^nu * K_nu(x). Exposed separately so the
// half-integer closed forms can be cross-checked against it.
inline double matern_bessel(double x, double nu) {
    const double value =
        std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
    return std::min(1.0, std::max(0.0, value));
}

}  // namespace detail

inline double matern_correlation(double d, const MaternParams& params) {
    if (!(params.nu > 0.0) || !(params.r > 0.0)) {
        throw InputError("matern_correlation: smoothness and range must be positive");
    }
    if (!(d >= 0.0)) throw InputError("matern_correlation: distance must be nonnegative");
    if (d == 0.0) return 1.0;

    const double x = d / params.r;
    if (params.nu == 0.5) return std::exp(-x);
    if (params.nu == 1.5) return (1.0 + x) * std::exp(-x);
    if (params.nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
    return detail::matern_bessel(x, params.nu);
}

// Zero-mean Gaussian process draws with Matern correlation over a fixed
// location set. The correlation matrix is factorized once and reused across
// replicates; draws are standardized to sample mean 0 and variance 1.
class GpSampler {
public:
    GpSampler(const std::vector<Location>& locations, const MaternParams& params,
              DistanceMetric metric = DistanceMetric::euclidean)
        : n_(static_cast<Eigen::Index>(locations.size())) {
        if (n_ < 2) throw InputError("GpSampler: at least two locations required");
        const DistanceMatrix d = pairwise_distances(locations, locations, metric);

        Eigen::MatrixXd corr(n_, n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            corr(i, i) = 1.0;
            for (Eigen::Index j = i + 1; j < n_; ++j) {
                const double rho = matern_correlation(d.values(i, j), params);
                corr(i, j) = rho;
                corr(j, i) = rho;
            }
        }

        Eigen::LLT<Eigen::MatrixXd> llt(corr);
        if (llt.info() != Eigen::Success) {
            corr.diagonal().array() += 1e-8;  // jitter duplicated / near-duplicate locations
            llt.compute(corr);
            if (llt.info() != Eigen::Success) {
                throw NumericalError("GpSampler: covariance factorization failed");
            }
        }
        chol_ = llt.matrixL();
    }

    Eigen::Index size() const { return n_; }

    // Unstandardized field draw; consumes exactly n normals from the stream.
    Eigen::VectorXd sample_raw(Rng& rng) const {
        Eigen::VectorXd z(n_);
        for (Eigen::Index i = 0; i < n_; ++i) z(i) = rng.normal();
        return chol_ * z;
    }

    Eigen::VectorXd sample(Rng& rng) const {
        Eigen::VectorXd u = sample_raw(rng);
        const double mean = u.mean();
        u.array() -= mean;
        const double sd = std::sqrt(u.squaredNorm() / static_cast<double>(n_ - 1));
        if (!(sd > 0.0)) throw NumericalError("GpSampler: degenerate draw");
        u /= sd;
        return u;
    }

private:
    Eigen::Index n_;
    Eigen::MatrixXd chol_;
};

inline Eigen::VectorXd sample_gp(const std::vector<Location>& locations,
                                 const MaternParams& params, std::uint64_t seed) {
    Rng rng(seed);
    return GpSampler(locations, params).sample(rng);
}

// Generative coefficients. Defaults: four observed confounders,
// logit P(Z=1) = -0.85 + 0.1 X1 + 0.2 X2 - 0.1 X3 - 0.1 X4 + 0.3 U
// (about 30% treated) and
// Y = Z + 0.55 X1 + 0.21 X2 + 1.17 X3 - 0.11 X4 + 3 U + N(0, 1).
struct DataGeneratingProcess {
    double treat_intercept = -0.85;
    std::vector<double> treat_x = {0.1, 0.2, -0.1, -0.1};
    double treat_u = 0.3;
    double att = 1.0;
    std::vector<double> outcome_x = {0.55, 0.21, 1.17, -0.11};
    double outcome_u = 3.0;
    double noise_sd = 1.0;
};

// One stream per replicate, drawn in the fixed order (U, X1..Xp, Z, eps) so
// regeneration is stable.
inline Dataset generate_dataset(const std::vector<Location>& locations, const GpSampler& gp,
                                std::uint64_t seed,
                                const DataGeneratingProcess& dgp = DataGeneratingProcess{},
                                DistanceMetric metric = DistanceMetric::euclidean) {
    const Eigen::Index n = static_cast<Eigen::Index>(locations.size());
    if (n < 2) throw InputError("generate_dataset: at least two locations required");
    if (gp.size() != n) throw InputError("generate_dataset: sampler size mismatch");
    const std::size_t p = dgp.treat_x.size();
    if (dgp.outcome_x.size() != p) {
        throw InputError("generate_dataset: treatment and outcome coefficient counts differ");
    }

    Rng rng(seed);

    Dataset ds;
    ds.locations = locations;
    ds.metric = metric;
    ds.seed = seed;
    ds.u = gp.sample(rng);

    ds.covariates.resize(n, static_cast<Eigen::Index>(p));
    ds.covariate_names.resize(p);
    for (std::size_t k = 0; k < p; ++k) {
        ds.covariate_names[k] = "X" + std::to_string(k + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            ds.covariates(i, static_cast<Eigen::Index>(k)) = rng.normal();
        }
    }

    Eigen::VectorXd true_ps(n);
    ds.z.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double eta = dgp.treat_intercept + dgp.treat_u * (*ds.u)(i);
        for (std::size_t k = 0; k < p; ++k) {
            eta += dgp.treat_x[k] * ds.covariates(i, static_cast<Eigen::Index>(k));
        }
        true_ps(i) = expit(eta);
    }
    for (Eigen::Index i = 0; i < n; ++i) ds.z(i) = rng.uniform() < true_ps(i) ? 1 : 0;
    ds.true_ps = std::move(true_ps);

    ds.y.resize(n);
    ds.has_outcome = true;
    for (Eigen::Index i = 0; i < n; ++i) {
        double y = dgp.att * ds.z(i) + dgp.outcome_u * (*ds.u)(i);
        for (std::size_t k = 0; k < p; ++k) {
            y += dgp.outcome_x[k] * ds.covariates(i, static_cast<Eigen::Index>(k));
        }
        ds.y(i) = y + dgp.noise_sd * rng.normal();
    }

    ds.ids.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        ds.ids[static_cast<std::size_t>(i)] = "u" + std::to_string(i + 1);
    }
    return ds;
}

inline Dataset generate_dataset(const std::vector<Location>& locations,
                                const MaternParams& params, std::uint64_t seed,
                                const DataGeneratingProcess& dgp = DataGeneratingProcess{}) {
    return generate_dataset(locations, GpSampler(locations, params), seed, dgp);
}

enum class MethodKind { dapsm, naive, naive_coords, distance_caliper, gold_ps, gold_outcome };

struct MethodConfig {
    std::string name;
    MethodKind kind = MethodKind::naive;
    DapsConfig daps;                          // used when kind == dapsm
    std::optional<double> distance_quantile;  // distance_caliper only
    std::optional<double> ps_caliper;
};

enum class LocationSource { uniform_random, file };

inline std::vector<MethodConfig> default_simulation_methods() {
    std::vector<MethodConfig> methods;
    methods.push_back({"gold-ps", MethodKind::gold_ps, {}, {}, {}});
    methods.push_back({"gold-outcome", MethodKind::gold_outcome, {}, {}, {}});
    methods.push_back({"naive", MethodKind::naive, {}, {}, {}});
    methods.push_back({"naive-coords", MethodKind::naive_coords, {}, {}, {}});
    methods.push_back({"distance-caliper", MethodKind::distance_caliper, {}, 0.1, {}});
    MethodConfig dapsm_method;
    dapsm_method.name = "dapsm";
    dapsm_method.kind = MethodKind::dapsm;
    dapsm_method.daps.fixed_w = std::nullopt;  // data-driven w
    dapsm_method.daps.asdm_cutoff = 0.1;
    methods.push_back(std::move(dapsm_method));
    return methods;
}

// Desk-scale defaults: the four corner cells of the smoothness/range grid.
struct SimulationConfig {
    int n_units = 400;
    std::vector<double> nu_grid = {0.1, 1.46};
    std::vector<double> r_grid = {0.1, 1.0};
    int n_replicates = 50;
    std::vector<MethodConfig> methods = default_simulation_methods();
    std::uint64_t base_seed = 20170301;
    LocationSource location_source = LocationSource::uniform_random;
    std::string location_file;
    std::vector<Location> locations;  // filled by the caller when source == file
    DistanceMetric location_metric = DistanceMetric::euclidean;
    double true_att = 1.0;
    int n_threads = 0;  // 0 = hardware concurrency
};

inline void validate_config(const SimulationConfig& config) {
    if (config.n_units < 10) throw InputError("simulation needs at least 10 units");
    if (config.n_replicates < 1) throw InputError("n_replicates must be at least 1");
    if (config.nu_grid.empty() || config.r_grid.empty()) {
        throw InputError("smoothness and range grids must be nonempty");
    }
    for (double nu : config.nu_grid) {
        if (!(nu > 0.0)) throw InputError("smoothness values must be positive");
    }
    for (double r : config.r_grid) {
        if (!(r > 0.0)) throw InputError("range values must be positive");
    }
    if (config.methods.empty()) throw InputError("no methods configured");
    std::vector<std::string> names;
    for (const auto& m : config.methods) {
        if (m.name.empty()) throw InputError("method name must be nonempty");
        if (std::find(names.begin(), names.end(), m.name) != names.end()) {
            throw InputError("duplicate method name: " + m.name);
        }
        names.push_back(m.name);
        if (m.kind == MethodKind::dapsm) validate_config(m.daps);
        if (m.kind == MethodKind::distance_caliper) {
            if (!m.distance_quantile ||
                !(*m.distance_quantile > 0.0 && *m.distance_quantile < 1.0)) {
                throw InputError("distance-caliper method needs a quantile in (0, 1)");
            }
        }
    }
    if (config.location_source == LocationSource::file && config.location_file.empty() &&
        config.locations.empty()) {
        throw InputError("location source is 'file' but no file or locations were provided");
    }
}

struct ReplicateRecord {
    int cell_index = 0;
    double nu = 0.0;
    double r = 0.0;
    int replicate = 0;
    std::string method;
    bool ok = false;
    std::string error;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    int n_pairs = 0;
    int n_dropped = 0;
    double mean_pair_distance = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> asdm_x;  // post-match, one per observed covariate
    double asdm_u = std::numeric_limits<double>::quiet_NaN();
    double chosen_w = std::numeric_limits<double>::quiet_NaN();
};

struct SummaryRow {
    double nu = 0.0;
    double r = 0.0;
    std::string method;
    int n_replicates = 0;
    int n_success = 0;
    double fail_pct = 0.0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    double relative_mse = std::numeric_limits<double>::quiet_NaN();
    double abs_bias = std::numeric_limits<double>::quiet_NaN();
    double mean_dropped = std::numeric_limits<double>::quiet_NaN();
    double dropped_iqr_lo = std::numeric_limits<double>::quiet_NaN();
    double dropped_iqr_hi = std::numeric_limits<double>::quiet_NaN();
    double mean_pair_distance = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> mean_asdm_x;
    double mean_asdm_u = std::numeric_limits<double>::quiet_NaN();
};

struct SimulationSummary {
    std::vector<SummaryRow> rows;  // cell-major, methods in configured order
    std::vector<std::string> covariate_names;
    std::vector<ReplicateRecord> records;
    std::uint64_t base_seed = 0;
    double true_att = 1.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline ReplicateRecord run_sim_method(const Dataset& ds, const MethodConfig& method,
                                      const std::vector<double>& treated_sd_x,
                                      double treated_sd_u) {
    ReplicateRecord rec;
    rec.method = method.name;
    rec.asdm_x.assign(treated_sd_x.size(), std::numeric_limits<double>::quiet_NaN());

    try {
        MatchedSet matched;
        bool has_match = true;
        switch (method.kind) {
            case MethodKind::dapsm: {
                const DapsmResult result = dapsm(ds, method.daps);
                matched = result.matched;
                if (result.w_selection) rec.chosen_w = result.w_selection->chosen_w;
                else rec.chosen_w = result.w_used;
                break;
            }
            case MethodKind::naive:
                matched = naive_match(ds, method.ps_caliper);
                break;
            case MethodKind::naive_coords:
                matched = naive_coords_match(ds, method.ps_caliper);
                break;
            case MethodKind::distance_caliper:
                matched = distance_caliper_match(ds, *method.distance_quantile,
                                                 method.ps_caliper);
                break;
            case MethodKind::gold_ps:
                matched = gold_ps_match(ds, method.ps_caliper);
                break;
            case MethodKind::gold_outcome: {
                rec.estimate = gold_outcome_estimate(ds).estimate;
                rec.ok = true;
                has_match = false;
                break;
            }
        }
        if (!has_match) return rec;

        rec.n_pairs = matched.n_pairs();
        rec.n_dropped = static_cast<int>(matched.dropped_treated.size());
        if (matched.empty()) {
            rec.ok = false;
            rec.error = "no matched pairs";
            return rec;
        }
        rec.mean_pair_distance = matched.mean_pair_distance;
        rec.estimate = att_diff_means(ds, matched).estimate;
        rec.ok = true;

        const std::vector<int> treated = ds.treated_indices();
        const std::vector<int> control = ds.control_indices();
        const double n = static_cast<double>(matched.pairs.size());
        for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
            double mt = 0.0, mc = 0.0;
            for (const auto& [t, c] : matched.pairs) {
                mt += ds.covariates(treated[static_cast<std::size_t>(t)], k);
                mc += ds.covariates(control[static_cast<std::size_t>(c)], k);
            }
            rec.asdm_x[static_cast<std::size_t>(k)] =
                std::abs(mt - mc) / n / treated_sd_x[static_cast<std::size_t>(k)];
        }
        if (ds.u) {
            double mt = 0.0, mc = 0.0;
            for (const auto& [t, c] : matched.pairs) {
                mt += (*ds.u)(treated[static_cast<std::size_t>(t)]);
                mc += (*ds.u)(control[static_cast<std::size_t>(c)]);
            }
            rec.asdm_u = std::abs(mt - mc) / n / treated_sd_u;
        }
    } catch (const Error& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

}  // namespace detail

inline std::vector<Location> uniform_locations(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Location> locations(static_cast<std::size_t>(n));
    for (auto& loc : locations) {
        loc.x = rng.uniform();
        loc.y = rng.uniform();
    }
    return locations;
}

// Runs every configured method on every replicate of every (nu, r) cell.
// Per-replicate failures are recorded, never fatal; fails are excluded from
// the dropped/distance/balance averages. Relative MSE is each method's MSE
// over its own successes divided by the gold-PS method's MSE over its own.
inline SimulationSummary run_monte_carlo(const SimulationConfig& config) {
    validate_config(config);
    if (config.location_source == LocationSource::file && config.locations.empty()) {
        throw InputError("locations have not been loaded from '" + config.location_file + "'");
    }

    const std::vector<Location> locations =
        config.location_source == LocationSource::file
            ? config.locations
            : uniform_locations(config.n_units, mix_seed(config.base_seed, 0x10CA710A5ULL));
    const DistanceMetric metric = config.location_source == LocationSource::file
                                      ? config.location_metric
                                      : DistanceMetric::euclidean;

    struct Cell {
        double nu, r;
    };
    std::vector<Cell> cells;
    for (double nu : config.nu_grid) {
        for (double r : config.r_grid) cells.push_back({nu, r});
    }

    std::vector<GpSampler> samplers;
    samplers.reserve(cells.size());
    for (const Cell& cell : cells) {
        samplers.emplace_back(locations, MaternParams{cell.nu, cell.r}, metric);
    }

    const DataGeneratingProcess dgp = [&] {
        DataGeneratingProcess d;
        d.att = config.true_att;
        return d;
    }();

    const int n_tasks = static_cast<int>(cells.size()) * config.n_replicates;
    std::vector<std::vector<ReplicateRecord>> task_records(static_cast<std::size_t>(n_tasks));

    std::atomic<int> next_task{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;

    const auto worker = [&] {
        while (true) {
            const int task = next_task.fetch_add(1);
            if (task >= n_tasks) break;
            try {
                const int cell_index = task / config.n_replicates;
                const int replicate = task % config.n_replicates;
                const Cell& cell = cells[static_cast<std::size_t>(cell_index)];

                const std::uint64_t seed =
                    mix_seed(config.base_seed, static_cast<std::uint64_t>(cell_index),
                             static_cast<std::uint64_t>(replicate));
                const Dataset ds = generate_dataset(
                    locations, samplers[static_cast<std::size_t>(cell_index)], seed, dgp, metric);

                const std::vector<int> treated = ds.treated_indices();
                std::vector<double> sd_x;
                for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
                    sd_x.push_back(detail::sd_at(ds.covariates.col(k), treated));
                }
                const double sd_u = detail::sd_at(*ds.u, treated);

                auto& records = task_records[static_cast<std::size_t>(task)];
                records.reserve(config.methods.size());
                for (const MethodConfig& method : config.methods) {
                    ReplicateRecord rec = detail::run_sim_method(ds, method, sd_x, sd_u);
                    rec.cell_index = cell_index;
                    rec.nu = cell.nu;
                    rec.r = cell.r;
                    rec.replicate = replicate;
                    records.push_back(std::move(rec));
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!worker_error) worker_error = std::current_exception();
            }
        }
    };

    int n_threads = config.n_threads > 0
                        ? config.n_threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_tasks));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    SimulationSummary summary;
    summary.base_seed = config.base_seed;
    summary.true_att = config.true_att;
    for (std::size_t k = 0; k < dgp.treat_x.size(); ++k) {
        summary.covariate_names.push_back("X" + std::to_string(k + 1));
    }
    for (const auto& records : task_records) {
        for (const auto& rec : records) summary.records.push_back(rec);
    }

    const std::size_t p = summary.covariate_names.size();
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        std::vector<double> gold_ps_success_sq_errors;
        for (const MethodConfig& method : config.methods) {
            SummaryRow row;
            row.nu = cells[ci].nu;
            row.r = cells[ci].r;
            row.method = method.name;
            row.n_replicates = config.n_replicates;
            row.mean_asdm_x.assign(p, std::numeric_limits<double>::quiet_NaN());

            std::vector<double> estimates, dropped, distances, asdm_u;
            std::vector<std::vector<double>> asdm_x(p);
            const bool is_matching = method.kind != MethodKind::gold_outcome;
            for (int rep = 0; rep < config.n_replicates; ++rep) {
                const auto& records =
                    task_records[ci * static_cast<std::size_t>(config.n_replicates) +
                                 static_cast<std::size_t>(rep)];
                const auto it = std::find_if(records.begin(), records.end(),
                                             [&](const ReplicateRecord& r) {
                                                 return r.method == method.name;
                                             });
                if (it == records.end() || !it->ok) continue;
                row.n_success += 1;
                estimates.push_back(it->estimate);
                if (is_matching) {
                    dropped.push_back(static_cast<double>(it->n_dropped));
                    distances.push_back(it->mean_pair_distance);
                    for (std::size_t k = 0; k < p && k < it->asdm_x.size(); ++k) {
                        asdm_x[k].push_back(it->asdm_x[k]);
                    }
                    if (std::isfinite(it->asdm_u)) asdm_u.push_back(it->asdm_u);
                }
            }

            row.fail_pct = 100.0 *
                           static_cast<double>(config.n_replicates - row.n_success) /
                           static_cast<double>(config.n_replicates);
            if (!estimates.empty()) {
                double se_sum = 0.0, mean = 0.0;
                for (double est : estimates) {
                    se_sum += (est - config.true_att) * (est - config.true_att);
                    mean += est;
                }
                row.mse = se_sum / static_cast<double>(estimates.size());
                row.abs_bias =
                    std::abs(mean / static_cast<double>(estimates.size()) - config.true_att);
            }
            if (!dropped.empty()) {
                row.mean_dropped = detail::mean_of(dropped);
                row.dropped_iqr_lo = detail::quantile_type7(dropped, 0.25);
                row.dropped_iqr_hi = detail::quantile_type7(dropped, 0.75);
            }
            row.mean_pair_distance = detail::mean_of(distances);
            for (std::size_t k = 0; k < p; ++k) row.mean_asdm_x[k] = detail::mean_of(asdm_x[k]);
            row.mean_asdm_u = detail::mean_of(asdm_u);

            if (method.kind == MethodKind::gold_ps) {
                for (double est : estimates) {
                    gold_ps_success_sq_errors.push_back((est - config.true_att) *
                                                        (est - config.true_att));
                }
            }
            summary.rows.push_back(std::move(row));
        }

        const double gold_mse = detail::mean_of(gold_ps_success_sq_errors);
        if (std::isfinite(gold_mse) && gold_mse > 0.0) {
            for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
                SummaryRow& row = summary.rows[ci * config.methods.size() + mi];
                row.relative_mse = row.mse / gold_mse;
            }
        }
    }
    return summary;
}

}  // namespace dapsm
