#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dapsm/dapsm.hpp"

namespace {

using dapsm::detail::format_double;

std::string pretty(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
}

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i > 0) out.push_back(' ');
        out += argv[i];
    }
    return out;
}

std::string file_hash(const std::string& path) {
    return dapsm::detail::hex64(dapsm::detail::fnv1a64(dapsm::detail::read_file(path)));
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct MatchOptions {
    std::string input;
    std::string out_prefix = "dapsm";
    std::string method = "dapsm";
    std::string w = "auto";
    std::string w_method = "grid";
    std::string w_scan = "full";
    double cutoff = 0.15;
    std::optional<double> caliper;
    std::string caliper_type = "daps";
    std::string distance_scheme = "minmax";
    std::string algorithm = "optimal";
    std::optional<double> distance_quantile;
    std::optional<std::string> estimate;
    std::uint64_t seed = 0;
};

struct SimulateOptions {
    std::string config_file;
    std::string out_prefix = "sim";
    std::optional<int> n_units;
    std::optional<int> n_replicates;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool dump_replicates = false;
};

struct BalanceOptions {
    std::string input;
    std::string pairs;
    std::string out_prefix = "balance";
    double cutoff = 0.15;
};

dapsm::DapsConfig daps_config_from(const MatchOptions& opt) {
    dapsm::DapsConfig config;
    if (opt.w == "auto") {
        config.fixed_w = std::nullopt;
    } else {
        try {
            config.fixed_w = std::stod(opt.w);
        } catch (const std::exception&) {
            throw dapsm::InputError("--w must be 'auto' or a number in [0, 1]");
        }
    }
    config.w_method = dapsm::detail::parse_w_method(opt.w_method);
    config.full_grid_scan = opt.w_scan == "full";
    config.asdm_cutoff = opt.cutoff;
    config.caliper = opt.caliper;
    config.caliper_type = dapsm::detail::parse_caliper_type(opt.caliper_type);
    config.distance_scheme = dapsm::detail::parse_distance_scheme(opt.distance_scheme);
    config.algorithm = dapsm::detail::parse_algorithm(opt.algorithm);
    return config;
}

std::string distance_column_name(const dapsm::Dataset& ds) {
    return ds.metric == dapsm::DistanceMetric::geodesic ? "distance_km" : "distance";
}

void write_pairs_file(const std::string& path, const std::string& provenance,
                      const dapsm::Dataset& ds, const dapsm::MatchedSet& matched,
                      const Eigen::MatrixXd& cost, const Eigen::MatrixXd& ps_diff,
                      const Eigen::MatrixXd& distance, const std::vector<int>& treated_rows,
                      const std::vector<int>& control_rows) {
    std::ostringstream out;
    out << provenance;
    out << "treated_id,control_id,daps,ps_diff," << distance_column_name(ds) << "\n";
    for (const auto& [t, c] : matched.pairs) {
        out << ds.ids[static_cast<std::size_t>(treated_rows[static_cast<std::size_t>(t)])] << ','
            << ds.ids[static_cast<std::size_t>(control_rows[static_cast<std::size_t>(c)])] << ','
            << format_double(cost(t, c)) << ',' << format_double(ps_diff(t, c)) << ','
            << format_double(distance(t, c)) << "\n";
    }
    dapsm::write_file(path, out.str());
}

void write_dropped_file(const std::string& path, const std::string& provenance,
                        const dapsm::Dataset& ds, const dapsm::MatchedSet& matched,
                        const std::vector<int>& treated_rows) {
    std::ostringstream out;
    out << provenance << "treated_id\n";
    for (int t : matched.dropped_treated) {
        out << ds.ids[static_cast<std::size_t>(treated_rows[static_cast<std::size_t>(t)])] << "\n";
    }
    dapsm::write_file(path, out.str());
}

void write_balance_file(const std::string& path, const std::string& provenance,
                        const dapsm::BalanceReport& report) {
    std::ostringstream out;
    out << provenance;
    out << "covariate,std_diff_before,std_diff_after,asdm_before,asdm_after,balanced_after\n";
    for (const auto& cb : report.per_covariate) {
        out << cb.name << ',' << format_double(cb.std_diff_before) << ','
            << format_double(cb.std_diff_after) << ',' << format_double(cb.asdm_before) << ','
            << format_double(cb.asdm_after) << ',';
        if (report.after_defined) {
            out << (cb.asdm_after <= report.cutoff ? 1 : 0);
        } else {
            out << "NA";
        }
        out << "\n";
    }
    out << "# n_imbalanced_before: " << report.n_imbalanced_before << "\n";
    out << "# n_imbalanced_after: "
        << (report.after_defined ? std::to_string(report.n_imbalanced_after) : "NA") << "\n";
    out << "# mean_asdm_after: " << format_double(report.mean_asdm_after) << "\n";
    out << "# max_asdm_after: " << format_double(report.max_asdm_after) << "\n";
    dapsm::write_file(path, out.str());
}

void write_estimates_file(const std::string& path, const std::string& provenance,
                          const std::vector<std::pair<std::string, dapsm::EffectEstimate>>& rows) {
    std::ostringstream out;
    out << provenance;
    out << "estimator,estimate,standard_error,ci_lower,ci_upper,n_pairs,degenerate_se\n";
    for (const auto& [name, est] : rows) {
        out << name << ',' << format_double(est.estimate) << ','
            << format_double(est.standard_error) << ',' << format_double(est.ci_lower) << ','
            << format_double(est.ci_upper) << ',' << est.n_pairs << ','
            << (est.degenerate_se ? 1 : 0) << "\n";
    }
    dapsm::write_file(path, out.str());
}

void write_trajectory_file(const std::string& path, const std::string& provenance,
                           const dapsm::WSelection& selection) {
    std::ostringstream out;
    out << provenance;
    out << "w,max_asdm,n_imbalanced,n_pairs,balanced\n";
    for (const auto& pt : selection.trajectory) {
        out << pretty(pt.w) << ',' << format_double(pt.max_asdm) << ',' << pt.n_imbalanced << ','
            << pt.n_pairs << ',' << (pt.balanced ? 1 : 0) << "\n";
    }
    out << "# chosen_w: " << pretty(selection.chosen_w) << "\n";
    dapsm::write_file(path, out.str());
}

void print_trajectory(const std::vector<dapsm::WTrajectoryPoint>& trajectory) {
    std::cerr << "  w        max_asdm   n_imbalanced  n_pairs\n";
    for (const auto& pt : trajectory) {
        char line[128];
        std::snprintf(line, sizeof(line), "  %-8.4f %-10.4f %-13d %d\n", pt.w, pt.max_asdm,
                      pt.n_imbalanced, pt.n_pairs);
        std::cerr << line;
    }
}

int run_match(const MatchOptions& opt, const std::string& command_line) {
    const dapsm::Dataset ds = dapsm::load_dataset_csv_file(opt.input);

    dapsm::OutputProvenance prov;
    prov.command = command_line;
    prov.input_hash = file_hash(opt.input);
    prov.seeds = "seed=" + std::to_string(opt.seed);
    const std::string header = dapsm::provenance_block(prov);

    dapsm::MatchedSet matched;
    Eigen::MatrixXd cost, ps_diff, distance;
    std::vector<int> treated_rows, control_rows;
    std::optional<dapsm::WSelection> selection;
    std::vector<dapsm::MatchedSet> grid_matches;

    if (opt.method == "dapsm") {
        const dapsm::DapsConfig config = daps_config_from(opt);
        dapsm::DapsmResult result = dapsm::dapsm(ds, config);
        matched = std::move(result.matched);
        cost = std::move(result.daps.cost);
        ps_diff = std::move(result.ps_diff);
        distance = std::move(result.raw_distance.values);
        treated_rows = std::move(result.treated_rows);
        control_rows = std::move(result.control_rows);
        selection = std::move(result.w_selection);
        grid_matches = std::move(result.grid_matches);
        if (selection) {
            std::cout << "selected w: " << pretty(selection->chosen_w) << "\n";
        }
    } else {
        dapsm::ComparatorSpec spec;
        if (opt.method == "naive") {
            spec.kind = dapsm::ComparatorKind::naive;
        } else if (opt.method == "naive-coords") {
            spec.kind = dapsm::ComparatorKind::naive_coords;
        } else if (opt.method == "distance-caliper") {
            spec.kind = dapsm::ComparatorKind::distance_caliper;
            if (!opt.distance_quantile) {
                throw dapsm::InputError("--distance-quantile is required for distance-caliper");
            }
            spec.distance_quantile = opt.distance_quantile;
        } else {
            throw dapsm::InputError("unknown method: " + opt.method);
        }
        spec.ps_caliper = opt.caliper;
        dapsm::ComparatorResult result = dapsm::run_comparator(ds, spec);
        matched = std::move(result.matched);
        cost = result.ps_diff;
        ps_diff = std::move(result.ps_diff);
        distance = std::move(result.raw_distance.values);
        treated_rows = std::move(result.treated_rows);
        control_rows = std::move(result.control_rows);
    }

    write_pairs_file(opt.out_prefix + "_pairs.csv", header, ds, matched, cost, ps_diff, distance,
                     treated_rows, control_rows);
    write_dropped_file(opt.out_prefix + "_dropped.csv", header, ds, matched, treated_rows);
    write_balance_file(opt.out_prefix + "_balance.csv", header,
                       dapsm::balance_report(ds, matched, opt.cutoff));
    if (selection) {
        write_trajectory_file(opt.out_prefix + "_wtrajectory.csv", header, *selection);
    }

    // Per-covariate balance across the scanned grid, for balance-vs-w plots.
    if (selection && !grid_matches.empty()) {
        std::ostringstream out;
        out << header << "w,n_pairs";
        for (const auto& name : ds.covariate_names) out << ",asdm_" << name;
        out << "\n";
        for (std::size_t i = 0; i < grid_matches.size(); ++i) {
            out << pretty(selection->trajectory[i].w) << ',' << grid_matches[i].n_pairs();
            if (grid_matches[i].empty()) {
                for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) out << ",NA";
            } else {
                const dapsm::BalanceReport rep =
                    dapsm::balance_report(ds, grid_matches[i], opt.cutoff);
                for (const auto& cb : rep.per_covariate) {
                    out << ',' << format_double(cb.asdm_after);
                }
            }
            out << "\n";
        }
        dapsm::write_file(opt.out_prefix + "_balance_vs_w.csv", out.str());
    }

    const bool estimate_requested = opt.estimate.has_value();
    if (estimate_requested && !ds.has_outcome) {
        throw dapsm::InputError("--estimate requires an outcome column");
    }
    if (estimate_requested && !matched.empty()) {
        // Accept covariates by stored name or by CSV column name (x_ prefix).
        std::vector<std::string> covariates =
            *opt.estimate == "none" ? std::vector<std::string>{} : split_commas(*opt.estimate);
        for (auto& name : covariates) {
            const bool known = std::find(ds.covariate_names.begin(), ds.covariate_names.end(),
                                         name) != ds.covariate_names.end();
            if (!known && name.rfind("x_", 0) == 0) name = name.substr(2);
        }
        std::vector<std::pair<std::string, dapsm::EffectEstimate>> rows;
        rows.emplace_back("diff-means", dapsm::att_diff_means(ds, matched));
        if (!covariates.empty()) {
            rows.emplace_back("linear-adjusted",
                              dapsm::att_linear_adjusted(ds, matched, covariates));
        }
        write_estimates_file(opt.out_prefix + "_estimate.csv", header, rows);
        for (const auto& [name, est] : rows) {
            std::cout << name << ": " << pretty(est.estimate) << " [" << pretty(est.ci_lower)
                      << ", " << pretty(est.ci_upper) << "]\n";
        }

        // Sensitivity of the estimate to w, over the grid kept by a full scan.
        if (selection && !grid_matches.empty()) {
            std::ostringstream out;
            out << header << "w,n_pairs,estimate,ci_lower,ci_upper\n";
            for (std::size_t i = 0; i < grid_matches.size(); ++i) {
                const double w = selection->trajectory[i].w;
                out << pretty(w) << ',' << grid_matches[i].n_pairs();
                if (grid_matches[i].empty()) {
                    out << ",NA,NA,NA\n";
                    continue;
                }
                const dapsm::EffectEstimate est =
                    covariates.empty()
                        ? dapsm::att_diff_means(ds, grid_matches[i])
                        : dapsm::att_linear_adjusted(ds, grid_matches[i], covariates);
                out << ',' << format_double(est.estimate) << ',' << format_double(est.ci_lower)
                    << ',' << format_double(est.ci_upper) << "\n";
            }
            dapsm::write_file(opt.out_prefix + "_estimate_vs_w.csv", out.str());
        }
    }

    std::cout << "matched pairs: " << matched.n_pairs()
              << ", dropped treated: " << matched.dropped_treated.size() << "\n";
    return 0;
}

int run_simulate(const SimulateOptions& opt, const std::string& command_line) {
    dapsm::SimulationConfig config;
    std::string config_hash = "builtin-defaults";
    if (!opt.config_file.empty()) {
        const std::string text = dapsm::detail::read_file(opt.config_file);
        config = dapsm::parse_simulation_config_string(text);
        config_hash = dapsm::detail::hex64(dapsm::detail::fnv1a64(text));
    }
    if (opt.n_units) config.n_units = *opt.n_units;
    if (opt.n_replicates) config.n_replicates = *opt.n_replicates;
    if (opt.seed) config.base_seed = *opt.seed;
    if (opt.threads) config.n_threads = *opt.threads;
    if (config.location_source == dapsm::LocationSource::file) {
        auto [locations, metric] = dapsm::load_locations_csv_file(config.location_file);
        if (opt.n_units && *opt.n_units != static_cast<int>(locations.size())) {
            throw dapsm::InputError("--n conflicts with the " +
                                    std::to_string(locations.size()) + " locations in " +
                                    config.location_file);
        }
        config.n_units = static_cast<int>(locations.size());
        config.locations = std::move(locations);
        config.location_metric = metric;
    }
    dapsm::validate_config(config);

    const dapsm::SimulationSummary summary = dapsm::run_monte_carlo(config);

    dapsm::OutputProvenance prov;
    prov.command = command_line;
    prov.input_hash = config_hash;
    prov.seeds = "base_seed=" + std::to_string(config.base_seed);
    const std::string header = dapsm::provenance_block(prov);

    dapsm::write_file(opt.out_prefix + "_summary.csv", header + dapsm::summary_to_csv(summary));

    nlohmann::json j;
    j["config"] = dapsm::simulation_config_to_json(config);
    j["summary"] = dapsm::summary_to_json(summary);
    dapsm::write_file(opt.out_prefix + "_summary.json", j.dump(2) + "\n");

    if (opt.dump_replicates) {
        dapsm::write_file(opt.out_prefix + "_replicates.csv",
                          header + dapsm::replicates_to_csv(summary));
    }

    int n_fail = 0;
    for (const auto& rec : summary.records) n_fail += rec.ok ? 0 : 1;
    std::cout << "cells: " << config.nu_grid.size() * config.r_grid.size()
              << ", replicates per cell: " << config.n_replicates
              << ", method runs failed: " << n_fail << "\n";
    std::cout << "wrote " << opt.out_prefix << "_summary.csv\n";
    return 0;
}

int run_balance(const BalanceOptions& opt, const std::string& command_line) {
    const dapsm::Dataset ds = dapsm::load_dataset_csv_file(opt.input);

    // An empty or whitespace-only pairs file is a valid "no matches yet"
    // input and produces a before-only report.
    std::vector<std::pair<std::string, std::string>> id_pairs;
    const std::string pair_bytes = dapsm::detail::read_file(opt.pairs);
    if (pair_bytes.find_first_not_of(" \t\r\n") != std::string::npos) {
        id_pairs = dapsm::load_pairs_csv_file(opt.pairs);
    }

    const std::vector<int> treated_rows = ds.treated_indices();
    const std::vector<int> control_rows = ds.control_indices();
    std::unordered_map<std::string, int> treated_ordinal, control_ordinal;
    for (std::size_t k = 0; k < treated_rows.size(); ++k) {
        treated_ordinal[ds.ids[static_cast<std::size_t>(treated_rows[k])]] = static_cast<int>(k);
    }
    for (std::size_t k = 0; k < control_rows.size(); ++k) {
        control_ordinal[ds.ids[static_cast<std::size_t>(control_rows[k])]] = static_cast<int>(k);
    }

    dapsm::MatchedSet matched;
    for (const auto& [tid, cid] : id_pairs) {
        const auto ti = treated_ordinal.find(tid);
        if (ti == treated_ordinal.end()) {
            throw dapsm::InputError("pairs file names unknown treated id '" + tid + "'");
        }
        const auto ci = control_ordinal.find(cid);
        if (ci == control_ordinal.end()) {
            throw dapsm::InputError("pairs file names unknown control id '" + cid + "'");
        }
        matched.pairs.emplace_back(ti->second, ci->second);
    }
    std::sort(matched.pairs.begin(), matched.pairs.end());

    const dapsm::BalanceReport report = dapsm::balance_report(ds, matched, opt.cutoff);

    dapsm::OutputProvenance prov;
    prov.command = command_line;
    prov.input_hash = file_hash(opt.input) + "," + file_hash(opt.pairs);
    const std::string header = dapsm::provenance_block(prov);
    write_balance_file(opt.out_prefix + "_balance.csv", header, report);

    for (const auto& cb : report.per_covariate) {
        std::cout << cb.name << ": before " << pretty(cb.asdm_before) << ", after "
                  << pretty(cb.asdm_after) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string command_line = join_args(argc, argv);

    CLI::App app{"Distance-adjusted propensity score matching"};
    app.require_subcommand(1);

    MatchOptions match_opt;
    CLI::App* match = app.add_subcommand("match", "Match a CSV dataset and report balance");
    match->add_option("input", match_opt.input, "input CSV")->required();
    match->add_option("--out", match_opt.out_prefix, "output file prefix");
    match->add_option("--method", match_opt.method, "matching method")
        ->check(CLI::IsMember({"dapsm", "naive", "naive-coords", "distance-caliper"}));
    match->add_option("--w", match_opt.w, "DAPS weight in [0,1], or 'auto'");
    match->add_option("--w-method", match_opt.w_method, "w selection method")
        ->check(CLI::IsMember({"grid", "bisection"}));
    match->add_option("--w-scan", match_opt.w_scan,
                      "grid scan mode: stop at first balanced w, or scan the full grid")
        ->check(CLI::IsMember({"stop", "full"}));
    match->add_option("--cutoff", match_opt.cutoff, "ASDM balance cutoff");
    match->add_option("--caliper", match_opt.caliper,
                      "caliper in component sd units (PS caliper for comparator methods)");
    match->add_option("--caliper-type", match_opt.caliper_type, "dapsm caliper type")
        ->check(CLI::IsMember({"daps", "ps", "distance"}));
    match->add_option("--distance-scheme", match_opt.distance_scheme, "distance standardization")
        ->check(CLI::IsMember({"minmax", "ecdf"}));
    match->add_option("--algorithm", match_opt.algorithm, "matching algorithm")
        ->check(CLI::IsMember({"greedy", "optimal"}));
    match->add_option("--distance-quantile", match_opt.distance_quantile,
                      "distance caliper quantile in (0,1)");
    match->add_option("--estimate", match_opt.estimate,
                      "effect estimation: 'none' for difference in means, or a comma-separated "
                      "covariate list for a linear adjustment");
    match->add_option("--seed", match_opt.seed, "seed recorded in output headers");

    SimulateOptions sim_opt;
    CLI::App* simulate = app.add_subcommand("simulate", "Run the Monte Carlo evaluation");
    simulate->add_option("--config", sim_opt.config_file, "JSON config (defaults used if absent)");
    simulate->add_option("--out", sim_opt.out_prefix, "output file prefix");
    simulate->add_option("--n", sim_opt.n_units, "override unit count");
    simulate->add_option("--replicates", sim_opt.n_replicates, "override replicate count");
    simulate->add_option("--seed", sim_opt.seed, "override base seed");
    simulate->add_option("--threads", sim_opt.threads, "worker threads (0 = hardware)");
    simulate->add_flag("--dump-replicates", sim_opt.dump_replicates,
                       "write per-replicate records");

    BalanceOptions bal_opt;
    CLI::App* balance = app.add_subcommand("balance", "Balance report for an existing pairing");
    balance->add_option("input", bal_opt.input, "input CSV")->required();
    balance->add_option("pairs", bal_opt.pairs, "pairs CSV (treated_id,control_id)")->required();
    balance->add_option("--out", bal_opt.out_prefix, "output file prefix");
    balance->add_option("--cutoff", bal_opt.cutoff, "ASDM balance cutoff");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (match->parsed()) return run_match(match_opt, command_line);
        if (simulate->parsed()) return run_simulate(sim_opt, command_line);
        if (balance->parsed()) return run_balance(bal_opt, command_line);
    } catch (const dapsm::NoBalancedWError& e) {
        std::cerr << "error: " << e.what() << "\n";
        print_trajectory(e.trajectory());
        return 3;
    } catch (const dapsm::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dapsm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
