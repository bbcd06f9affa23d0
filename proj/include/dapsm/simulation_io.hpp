#pragma once

#include <json.hpp>

#include <sstream>
#include <string>

#include "dapsm/csv.hpp"
#include "dapsm/simulation.hpp"

namespace dapsm {

namespace detail {

inline DistanceScheme parse_distance_scheme(const std::string& s) {
    if (s == "minmax") return DistanceScheme::minmax;
    if (s == "ecdf") return DistanceScheme::ecdf;
    throw InputError("unknown distance scheme: " + s);
}

inline CaliperType parse_caliper_type(const std::string& s) {
    if (s == "daps") return CaliperType::daps;
    if (s == "ps") return CaliperType::ps_component;
    if (s == "distance") return CaliperType::distance_component;
    throw InputError("unknown caliper type: " + s);
}

inline MatchAlgorithm parse_algorithm(const std::string& s) {
    if (s == "greedy") return MatchAlgorithm::greedy;
    if (s == "optimal") return MatchAlgorithm::optimal;
    throw InputError("unknown matching algorithm: " + s);
}

inline WMethod parse_w_method(const std::string& s) {
    if (s == "grid") return WMethod::grid;
    if (s == "bisection") return WMethod::bisection;
    throw InputError("unknown w selection method: " + s);
}

inline MethodKind parse_method_kind(const std::string& s) {
    if (s == "dapsm") return MethodKind::dapsm;
    if (s == "naive") return MethodKind::naive;
    if (s == "naive-coords") return MethodKind::naive_coords;
    if (s == "distance-caliper") return MethodKind::distance_caliper;
    if (s == "gold-ps") return MethodKind::gold_ps;
    if (s == "gold-outcome") return MethodKind::gold_outcome;
    throw InputError("unknown method kind: " + s);
}

inline std::string method_kind_name(MethodKind kind) {
    switch (kind) {
        case MethodKind::dapsm: return "dapsm";
        case MethodKind::naive: return "naive";
        case MethodKind::naive_coords: return "naive-coords";
        case MethodKind::distance_caliper: return "distance-caliper";
        case MethodKind::gold_ps: return "gold-ps";
        case MethodKind::gold_outcome: return "gold-outcome";
    }
    return "?";
}

inline DapsConfig parse_daps_config(const nlohmann::json& j) {
    DapsConfig config;
    if (j.contains("w")) {
        if (j["w"].is_string()) {
            if (j["w"] != "auto") throw InputError("daps config: w must be a number or \"auto\"");
            config.fixed_w = std::nullopt;
        } else {
            config.fixed_w = j["w"].get<double>();
        }
    } else {
        config.fixed_w = std::nullopt;
    }
    if (j.contains("w_method")) config.w_method = parse_w_method(j["w_method"]);
    if (j.contains("cutoff")) config.asdm_cutoff = j["cutoff"].get<double>();
    if (j.contains("bisection_tolerance")) {
        config.bisection_tolerance = j["bisection_tolerance"].get<double>();
    }
    if (j.contains("caliper")) config.caliper = j["caliper"].get<double>();
    if (j.contains("caliper_type")) config.caliper_type = parse_caliper_type(j["caliper_type"]);
    if (j.contains("distance_scheme")) {
        config.distance_scheme = parse_distance_scheme(j["distance_scheme"]);
    }
    if (j.contains("algorithm")) config.algorithm = parse_algorithm(j["algorithm"]);
    return config;
}

}  // namespace detail

inline SimulationConfig parse_simulation_config(const nlohmann::json& j) {
    SimulationConfig config;
    if (j.contains("n_units")) config.n_units = j["n_units"].get<int>();
    if (j.contains("nu_grid")) config.nu_grid = j["nu_grid"].get<std::vector<double>>();
    if (j.contains("r_grid")) config.r_grid = j["r_grid"].get<std::vector<double>>();
    if (j.contains("n_replicates")) config.n_replicates = j["n_replicates"].get<int>();
    if (j.contains("base_seed")) config.base_seed = j["base_seed"].get<std::uint64_t>();
    if (j.contains("threads")) config.n_threads = j["threads"].get<int>();
    if (j.contains("location_file")) {
        config.location_source = LocationSource::file;
        config.location_file = j["location_file"].get<std::string>();
    }
    if (j.contains("methods")) {
        config.methods.clear();
        for (const auto& jm : j["methods"]) {
            MethodConfig method;
            method.kind = detail::parse_method_kind(jm.at("kind").get<std::string>());
            method.name = jm.contains("name") ? jm["name"].get<std::string>()
                                              : detail::method_kind_name(method.kind);
            if (method.kind == MethodKind::dapsm) method.daps = detail::parse_daps_config(jm);
            if (jm.contains("distance_quantile")) {
                method.distance_quantile = jm["distance_quantile"].get<double>();
            }
            if (jm.contains("ps_caliper")) method.ps_caliper = jm["ps_caliper"].get<double>();
            config.methods.push_back(std::move(method));
        }
    }
    validate_config(config);
    return config;
}

inline SimulationConfig parse_simulation_config_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed simulation config: ") + e.what());
    }
    try {
        return parse_simulation_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed simulation config: ") + e.what());
    }
}

inline nlohmann::json simulation_config_to_json(const SimulationConfig& config) {
    nlohmann::json j;
    j["n_units"] = config.n_units;
    j["nu_grid"] = config.nu_grid;
    j["r_grid"] = config.r_grid;
    j["n_replicates"] = config.n_replicates;
    j["base_seed"] = config.base_seed;
    if (config.location_source == LocationSource::file) {
        j["location_file"] = config.location_file;
    }
    j["methods"] = nlohmann::json::array();
    for (const auto& m : config.methods) {
        nlohmann::json jm;
        jm["name"] = m.name;
        jm["kind"] = detail::method_kind_name(m.kind);
        if (m.kind == MethodKind::dapsm) {
            if (m.daps.fixed_w) {
                jm["w"] = *m.daps.fixed_w;
            } else {
                jm["w"] = "auto";
                jm["w_method"] = m.daps.w_method == WMethod::grid ? "grid" : "bisection";
                jm["cutoff"] = m.daps.asdm_cutoff;
            }
            if (m.daps.caliper) jm["caliper"] = *m.daps.caliper;
        }
        if (m.distance_quantile) jm["distance_quantile"] = *m.distance_quantile;
        if (m.ps_caliper) jm["ps_caliper"] = *m.ps_caliper;
        j["methods"].push_back(std::move(jm));
    }
    return j;
}

// One row per cell and method; deterministic formatting so identical seeds
// produce byte-identical files.
inline std::string summary_to_csv(const SimulationSummary& summary) {
    std::ostringstream out;
    out << "nu,r,method,n_replicates,n_success,fail_pct,mse,relative_mse,abs_bias,"
           "mean_dropped,dropped_iqr_lo,dropped_iqr_hi,mean_pair_distance";
    for (const auto& name : summary.covariate_names) out << ",mean_asdm_" << name;
    out << ",mean_asdm_U\n";
    for (const auto& row : summary.rows) {
        out << detail::format_double(row.nu) << ',' << detail::format_double(row.r) << ','
            << row.method << ',' << row.n_replicates << ',' << row.n_success << ','
            << detail::format_double(row.fail_pct) << ',' << detail::format_double(row.mse) << ','
            << detail::format_double(row.relative_mse) << ','
            << detail::format_double(row.abs_bias) << ','
            << detail::format_double(row.mean_dropped) << ','
            << detail::format_double(row.dropped_iqr_lo) << ','
            << detail::format_double(row.dropped_iqr_hi) << ','
            << detail::format_double(row.mean_pair_distance);
        for (double a : row.mean_asdm_x) out << ',' << detail::format_double(a);
        out << ',' << detail::format_double(row.mean_asdm_u) << "\n";
    }
    return out.str();
}

inline std::string replicates_to_csv(const SimulationSummary& summary) {
    std::ostringstream out;
    out << "nu,r,replicate,method,ok,error,estimate,n_pairs,n_dropped,mean_pair_distance";
    for (const auto& name : summary.covariate_names) out << ",asdm_" << name;
    out << ",asdm_U,chosen_w\n";
    for (const auto& rec : summary.records) {
        std::string error = rec.error;
        for (auto& c : error) {
            if (c == ',' || c == '\n') c = ';';
        }
        out << detail::format_double(rec.nu) << ',' << detail::format_double(rec.r) << ','
            << rec.replicate << ',' << rec.method << ',' << (rec.ok ? 1 : 0) << ',' << error
            << ',' << detail::format_double(rec.estimate) << ',' << rec.n_pairs << ','
            << rec.n_dropped << ',' << detail::format_double(rec.mean_pair_distance);
        for (double a : rec.asdm_x) out << ',' << detail::format_double(a);
        out << ',' << detail::format_double(rec.asdm_u) << ','
            << detail::format_double(rec.chosen_w) << "\n";
    }
    return out.str();
}

inline nlohmann::json summary_to_json(const SimulationSummary& summary) {
    nlohmann::json j;
    j["version"] = DAPSM_VERSION;
    j["base_seed"] = summary.base_seed;
    j["true_att"] = summary.true_att;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : summary.rows) {
        nlohmann::json jr;
        jr["nu"] = row.nu;
        jr["r"] = row.r;
        jr["method"] = row.method;
        jr["n_replicates"] = row.n_replicates;
        jr["n_success"] = row.n_success;
        jr["fail_pct"] = row.fail_pct;
        jr["mse"] = row.mse;
        jr["relative_mse"] = row.relative_mse;
        jr["abs_bias"] = row.abs_bias;
        jr["mean_dropped"] = row.mean_dropped;
        jr["dropped_iqr"] = {row.dropped_iqr_lo, row.dropped_iqr_hi};
        jr["mean_pair_distance"] = row.mean_pair_distance;
        for (std::size_t k = 0; k < summary.covariate_names.size(); ++k) {
            jr["mean_asdm"][summary.covariate_names[k]] = row.mean_asdm_x[k];
        }
        jr["mean_asdm"]["U"] = row.mean_asdm_u;
        j["rows"].push_back(std::move(jr));
    }
    return j;
}

// Location files: header (x,y) or (lon,lat), one point per row.
inline std::pair<std::vector<Location>, DistanceMetric> load_locations_csv_file(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    const detail::CsvTable table = detail::parse_csv(in);

    int xi = -1, yi = -1;
    DistanceMetric metric = DistanceMetric::euclidean;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == "x") xi = static_cast<int>(i);
        if (table.header[i] == "y") yi = static_cast<int>(i);
    }
    if (xi < 0 || yi < 0) {
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (table.header[i] == "lon") xi = static_cast<int>(i);
            if (table.header[i] == "lat") yi = static_cast<int>(i);
        }
        if (xi >= 0 && yi >= 0) metric = DistanceMetric::geodesic;
    }
    if (xi < 0 || yi < 0) {
        throw InputError("location file needs (x,y) or (lon,lat) columns");
    }

    std::vector<Location> locations;
    locations.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int line = table.line_numbers[r];
        Location loc;
        loc.x = detail::parse_double(table.rows[r][static_cast<std::size_t>(xi)],
                                     table.header[static_cast<std::size_t>(xi)], line);
        loc.y = detail::parse_double(table.rows[r][static_cast<std::size_t>(yi)],
                                     table.header[static_cast<std::size_t>(yi)], line);
        locations.push_back(loc);
    }
    return {locations, metric};
}

}  // namespace dapsm
