#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "dapsm/errors.hpp"

namespace dapsm {

struct AssignmentResult {
    std::vector<int> row_to_col;  // -1 for unmatched rows
    int n_matched = 0;
};

namespace detail {

// Exact min-cost bipartite assignment by successive shortest augmenting
// paths with dual potentials. Each augmentation takes the globally shortest
// path over all free rows, so the result maximizes the number of matched
// rows first and minimizes total cost among matchings of that size.
// Infeasible cells are encoded as +inf and simply carry no edge; costs must
// be nonnegative and finite elsewhere.
class AssignmentSolver {
public:
    AssignmentSolver(const Eigen::MatrixXd& cost,
                     const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* feasible)
        : n_rows_(static_cast<int>(cost.rows())), n_cols_(static_cast<int>(cost.cols())) {
        cost_.resize(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(n_cols_));
        for (int i = 0; i < n_rows_; ++i) {
            for (int j = 0; j < n_cols_; ++j) {
                const bool ok = (!feasible || (*feasible)(i, j)) && std::isfinite(cost(i, j));
                double c = ok ? cost(i, j) : kInf;
                if (ok && c < 0.0) {
                    throw InputError("assignment costs must be nonnegative");
                }
                cost_[flat(i, j)] = c;
            }
        }
    }

    AssignmentResult solve() {
        match_row_.assign(static_cast<std::size_t>(n_rows_), -1);
        match_col_.assign(static_cast<std::size_t>(n_cols_), -1);
        u_.assign(static_cast<std::size_t>(n_rows_), 0.0);
        v_.assign(static_cast<std::size_t>(n_cols_), 0.0);

        int matched = 0;
        while (matched < std::min(n_rows_, n_cols_)) {
            if (!augment()) break;
            ++matched;
        }
        AssignmentResult result;
        result.row_to_col = match_row_;
        result.n_matched = matched;
        return result;
    }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    std::size_t flat(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_cols_) +
               static_cast<std::size_t>(j);
    }

    bool augment() {
        std::vector<double> dist(static_cast<std::size_t>(n_cols_), kInf);
        std::vector<int> from_row(static_cast<std::size_t>(n_cols_), -1);
        std::vector<char> scanned(static_cast<std::size_t>(n_cols_), 0);

        // Multi-source start: reduced costs from every free row.
        for (int i = 0; i < n_rows_; ++i) {
            if (match_row_[static_cast<std::size_t>(i)] != -1) continue;
            const double ui = u_[static_cast<std::size_t>(i)];
            const double* row = &cost_[flat(i, 0)];
            for (int j = 0; j < n_cols_; ++j) {
                if (row[j] == kInf) continue;
                const double rc = row[j] - ui - v_[static_cast<std::size_t>(j)];
                if (rc < dist[static_cast<std::size_t>(j)]) {
                    dist[static_cast<std::size_t>(j)] = rc;
                    from_row[static_cast<std::size_t>(j)] = i;
                }
            }
        }

        int found = -1;
        while (true) {
            int best = -1;
            double best_dist = kInf;
            for (int j = 0; j < n_cols_; ++j) {
                if (!scanned[static_cast<std::size_t>(j)] &&
                    dist[static_cast<std::size_t>(j)] < best_dist) {
                    best_dist = dist[static_cast<std::size_t>(j)];
                    best = j;
                }
            }
            if (best == -1) return false;  // no augmenting path remains
            scanned[static_cast<std::size_t>(best)] = 1;
            if (match_col_[static_cast<std::size_t>(best)] == -1) {
                found = best;
                break;
            }
            const int i2 = match_col_[static_cast<std::size_t>(best)];
            const double ui2 = u_[static_cast<std::size_t>(i2)];
            const double* row = &cost_[flat(i2, 0)];
            for (int j = 0; j < n_cols_; ++j) {
                if (scanned[static_cast<std::size_t>(j)] || row[j] == kInf) continue;
                const double nd = best_dist + row[j] - ui2 - v_[static_cast<std::size_t>(j)];
                if (nd < dist[static_cast<std::size_t>(j)]) {
                    dist[static_cast<std::size_t>(j)] = nd;
                    from_row[static_cast<std::size_t>(j)] = i2;
                }
            }
        }

        // Dual update keeps reduced costs nonnegative and path edges tight.
        const double path_len = dist[static_cast<std::size_t>(found)];
        for (int j = 0; j < n_cols_; ++j) {
            if (!scanned[static_cast<std::size_t>(j)]) continue;
            const double dj = dist[static_cast<std::size_t>(j)];
            v_[static_cast<std::size_t>(j)] += dj - path_len;
            const int mi = match_col_[static_cast<std::size_t>(j)];
            if (mi != -1) u_[static_cast<std::size_t>(mi)] += path_len - dj;
        }

        // Flip the alternating path back to the free row it started from.
        int j = found;
        while (true) {
            const int i = from_row[static_cast<std::size_t>(j)];
            match_col_[static_cast<std::size_t>(j)] = i;
            const int prev = match_row_[static_cast<std::size_t>(i)];
            match_row_[static_cast<std::size_t>(i)] = j;
            if (prev == -1) {
                u_[static_cast<std::size_t>(i)] += path_len;
                break;
            }
            j = prev;
        }
        return true;
    }

    int n_rows_;
    int n_cols_;
    std::vector<double> cost_;  // row-major, +inf where no edge exists
    std::vector<int> match_row_;
    std::vector<int> match_col_;
    std::vector<double> u_;
    std::vector<double> v_;
};

}  // namespace detail

inline AssignmentResult min_cost_assignment(
    const Eigen::MatrixXd& cost,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* feasible = nullptr) {
    return detail::AssignmentSolver(cost, feasible).solve();
}

}  // namespace dapsm
