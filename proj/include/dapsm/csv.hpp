#pragma once

#include <charconv>
#include <cstdlib>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dapsm/dataset.hpp"
#include "dapsm/errors.hpp"
#include "dapsm/version.hpp"

namespace dapsm {

namespace detail {

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

inline std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line, int line_number) {
    std::vector<std::string> fields;
    std::string current;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (in_quotes) {
        throw InputError("unterminated quote on line " + std::to_string(line_number));
    }
    fields.push_back(std::move(current));
    return fields;
}

inline double parse_double(const std::string& field, const std::string& column,
                           int line_number) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc{} || result.ptr != end || field.empty()) {
        throw InputError("line " + std::to_string(line_number) + ": column '" + column +
                         "' has non-numeric value '" + field + "'");
    }
    if (!std::isfinite(value)) {
        throw InputError("line " + std::to_string(line_number) + ": column '" + column +
                         "' is not finite");
    }
    return value;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line_numbers;  // original file line per row
};

inline CsvTable parse_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    int line_number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line, line_number);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw InputError("line " + std::to_string(line_number) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_number);
    }
    if (!have_header) throw InputError("CSV input has no header row");
    return table;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

// Unit schema: id, coordinates as (lon,lat) for geodesic or (x,y) for
// Euclidean distances, z in {0,1}, optional outcome, and covariates in
// columns prefixed x_. With Euclidean coordinates the outcome column is
// named 'outcome' since 'y' is taken by the coordinate; 'outcome' is also
// accepted as a synonym for 'y' in the geodesic layout.
inline Dataset load_dataset_csv(std::istream& in) {
    const detail::CsvTable table = detail::parse_csv(in);

    std::unordered_map<std::string, std::size_t> columns;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i].empty()) throw InputError("CSV header contains an empty column name");
        if (!columns.emplace(table.header[i], i).second) {
            throw InputError("duplicate column: " + table.header[i]);
        }
    }
    const auto has = [&](const std::string& name) { return columns.count(name) > 0; };

    if (!has("id")) throw InputError("missing required column 'id'");
    if (!has("z")) throw InputError("missing required column 'z'");

    const bool geo = has("lon") && has("lat");
    const bool euclid = has("x") && has("y");
    if (geo == euclid) {
        throw InputError("coordinates must be given as either (lon,lat) or (x,y)");
    }
    const std::string cx = geo ? "lon" : "x";
    const std::string cy = geo ? "lat" : "y";

    std::string outcome_column;
    if (geo && has("y")) outcome_column = "y";
    if (has("outcome")) {
        if (!outcome_column.empty()) throw InputError("both 'y' and 'outcome' columns present");
        outcome_column = "outcome";
    }

    std::vector<std::string> covariate_columns;
    for (const auto& name : table.header) {
        if (name == "id" || name == "z" || name == cx || name == cy || name == outcome_column) {
            continue;
        }
        if (name.rfind("x_", 0) == 0) {
            covariate_columns.push_back(name);
        } else {
            throw InputError("unrecognized column '" + name +
                             "' (covariates must be prefixed x_)");
        }
    }

    Dataset ds;
    ds.metric = geo ? DistanceMetric::geodesic : DistanceMetric::euclidean;
    ds.has_outcome = !outcome_column.empty();
    const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
    if (n == 0) throw InputError("CSV input has no data rows");

    ds.ids.reserve(static_cast<std::size_t>(n));
    ds.locations.resize(static_cast<std::size_t>(n));
    ds.z.resize(n);
    if (ds.has_outcome) ds.y.resize(n);
    ds.covariates.resize(n, static_cast<Eigen::Index>(covariate_columns.size()));
    for (const auto& name : covariate_columns) {
        ds.covariate_names.push_back(name.substr(2));
    }

    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        const int line = table.line_numbers[static_cast<std::size_t>(r)];
        const auto field = [&](const std::string& name) -> const std::string& {
            return row[columns.at(name)];
        };

        if (field("id").empty()) {
            throw InputError("line " + std::to_string(line) + ": empty id");
        }
        ds.ids.push_back(field("id"));
        ds.locations[static_cast<std::size_t>(r)].x = detail::parse_double(field(cx), cx, line);
        ds.locations[static_cast<std::size_t>(r)].y = detail::parse_double(field(cy), cy, line);

        const std::string& zf = field("z");
        if (zf == "0") {
            ds.z(r) = 0;
        } else if (zf == "1") {
            ds.z(r) = 1;
        } else {
            throw InputError("line " + std::to_string(line) + ": column 'z' must be 0 or 1, got '" +
                             zf + "'");
        }
        if (ds.has_outcome) {
            ds.y(r) = detail::parse_double(field(outcome_column), outcome_column, line);
        }
        for (std::size_t k = 0; k < covariate_columns.size(); ++k) {
            ds.covariates(r, static_cast<Eigen::Index>(k)) =
                detail::parse_double(field(covariate_columns[k]), covariate_columns[k], line);
        }
    }
    validate_dataset(ds);
    return ds;
}

inline Dataset load_dataset_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    return load_dataset_csv(in);
}

inline std::string dataset_to_csv(const Dataset& ds) {
    const bool geo = ds.metric == DistanceMetric::geodesic;
    std::ostringstream out;
    out << "id," << (geo ? "lon,lat" : "x,y") << ",z";
    if (ds.has_outcome) out << (geo ? ",y" : ",outcome");
    for (const auto& name : ds.covariate_names) out << ",x_" << name;
    out << "\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        out << ds.ids[static_cast<std::size_t>(i)] << ','
            << detail::format_double(ds.locations[static_cast<std::size_t>(i)].x) << ','
            << detail::format_double(ds.locations[static_cast<std::size_t>(i)].y) << ','
            << ds.z(i);
        if (ds.has_outcome) out << ',' << detail::format_double(ds.y(i));
        for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
            out << ',' << detail::format_double(ds.covariates(i, k));
        }
        out << "\n";
    }
    return out.str();
}

// Reproducibility header written at the top of every output file.
struct OutputProvenance {
    std::string command;
    std::string input_hash;
    std::string seeds;
};

inline std::string provenance_block(const OutputProvenance& p) {
    std::ostringstream out;
    out << "# dapsm " << DAPSM_VERSION << "\n";
    if (!p.command.empty()) out << "# command: " << p.command << "\n";
    if (!p.input_hash.empty()) out << "# input-hash: " << p.input_hash << "\n";
    if (!p.seeds.empty()) out << "# seeds: " << p.seeds << "\n";
    return out.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << contents;
}

// Pairs files: treated_id,control_id plus whatever diagnostic columns the
// writer added. Only the first two columns are read back.
inline std::vector<std::pair<std::string, std::string>> load_pairs_csv_file(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    const detail::CsvTable table = detail::parse_csv(in);
    if (table.header.size() < 2 || table.header[0] != "treated_id" ||
        table.header[1] != "control_id") {
        throw InputError("pairs file must start with columns treated_id,control_id");
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(table.rows.size());
    for (const auto& row : table.rows) pairs.emplace_back(row[0], row[1]);
    return pairs;
}

}  // namespace dapsm
