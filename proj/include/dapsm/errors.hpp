#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dapsm {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid input: bad shapes, coordinates out of range, schema violations,
// rank-deficient designs, unknown ids.
class InputError : public Error {
public:
    using Error::Error;
};

// All treated-control pairs are equidistant; min-max standardization has
// zero range. The caller must either run with w = 1 or abort.
class DegenerateScaleError : public Error {
public:
    using Error::Error;
};

// Logistic fit did not converge within the iteration budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Treatment is (quasi-)separable: coefficients diverge and fitted
// probabilities collapse to 0/1, which breaks matching calipers.
class SeparationError : public Error {
public:
    using Error::Error;
};

// Numerical failure (e.g. covariance factorization that persists after
// diagonal jitter).
class NumericalError : public Error {
public:
    using Error::Error;
};

// Effect estimation on an empty or rank-deficient matched sample.
class EstimationError : public Error {
public:
    using Error::Error;
};

struct WTrajectoryPoint {
    double w = 0.0;
    double max_asdm = 0.0;
    bool balanced = false;
    int n_imbalanced = 0;
    int n_pairs = 0;
};

// No candidate w satisfied the balance cutoff. Carries the evaluated
// trajectory so callers can report which w values were tried.
class NoBalancedWError : public Error {
public:
    NoBalancedWError(const std::string& what, std::vector<WTrajectoryPoint> trajectory)
        : Error(what), trajectory_(std::move(trajectory)) {}

    const std::vector<WTrajectoryPoint>& trajectory() const { return trajectory_; }

private:
    std::vector<WTrajectoryPoint> trajectory_;
};

}  // namespace dapsm
