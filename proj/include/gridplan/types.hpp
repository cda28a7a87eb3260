#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gridplan {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Base error for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input file violates the expected schema.
struct ParseError : Error {
    using Error::Error;
};

// A cross-reference (node id, branch index, type id) does not resolve.
struct ReferenceError : Error {
    using Error::Error;
};

// Partition spec does not split the network as required.
struct PartitionError : Error {
    using Error::Error;
};

// A planning model cannot be assembled from the given network.
struct BuildError : Error {
    using Error::Error;
};

// Numerical failure inside the LP/MILP engine; message carries a pivot trace.
struct SolverError : Error {
    using Error::Error;
};

// Solution cannot be decoded into a plan (fractional binaries, bad topology).
struct ExtractionError : Error {
    using Error::Error;
};

// Two routes that must agree (model vs. arithmetic recomputation) disagree.
struct ConsistencyError : Error {
    using Error::Error;
};

// Coordination bootstrap failed (a subproblem is infeasible).
struct InitializationError : Error {
    using Error::Error;
};

inline bool nearly_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol;
}

}  // namespace gridplan
