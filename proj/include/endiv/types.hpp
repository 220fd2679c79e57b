#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace endiv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Error hierarchy. The CLI maps each family onto an exit code.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file or header.
struct SchemaError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
// K < p.
struct IdentificationError : Error { using Error::Error; };
// Out-of-domain tuning parameter (alpha, c, budget, ...).
struct ParameterError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
// Solver did not reach the requested accuracy; carries a summary.
struct SolverError : Error { using Error::Error; };
struct WeakInstrumentError : Error { using Error::Error; };
// Enumeration would exceed the hard cap.
struct BudgetError : Error { using Error::Error; };
struct EstimationError : Error { using Error::Error; };

} // namespace endiv
