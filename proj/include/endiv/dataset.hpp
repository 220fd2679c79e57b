#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "endiv/types.hpp"

namespace endiv {

// Known structure of a simulated dataset.
struct GroundTruth {
    Vector beta0;
    Vector xi;                       // structural errors, y = X beta0 + xi
    std::map<Index, Vector> mu0;     // population orthogonal instruments, keyed by j
};

// Observations of the linear IV model y = X beta + xi with E[z xi] = 0.
// Columns are stored column-major; every estimator walks columns of X and Z.
struct Dataset {
    Vector y;   // n
    Matrix X;   // n x p, endogenous regressors
    Matrix Z;   // n x K, instruments
    std::optional<GroundTruth> truth;

    Index n() const { return y.size(); }
    Index p() const { return X.cols(); }
    Index K() const { return Z.cols(); }
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

void to_json(nlohmann::json& j, const ValidationReport& r);

// Lists every violated invariant; never throws.
ValidationReport validate(const Dataset& d);

// Throws IdentificationError for K < p and DimensionError for the rest.
void require_valid(const Dataset& d);

// Penalty levels shared by both estimation programs.
struct PenaltyConfig {
    double lambda_t = 1.0;
    double tau = 0.1;
    double c = 1.0;      // stage-2 multiplier on tau
    double alpha = 0.05;

    void check() const;
};

// Column naming convention: response, then prefix + 1-based index.
struct Schema {
    std::string response = "y";
    std::string regressor_prefix = "x";
    std::string instrument_prefix = "z";
};

Dataset read_dataset(std::istream& in, const Schema& schema = {});
Dataset load_dataset(const std::string& path, const Schema& schema = {});

// Shortest round-trip decimal representation of every value.
void write_dataset(std::ostream& out, const Dataset& d, const Schema& schema = {});
void save_dataset(const std::string& path, const Dataset& d, const Schema& schema = {});

} // namespace endiv
