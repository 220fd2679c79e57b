#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "endiv/types.hpp"

namespace endiv::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kEstimationError = 3;
inline constexpr int kIoError = 4;

struct RunConfig {
    std::string command; // estimate | bands | sensitivity | simulate | validate
    std::string input;
    std::string output;  // empty: stdout
    double alpha = 0.05;
    std::vector<Index> S; // 1-based, as typed
    Index draws = 2000;
    std::uint64_t seed = 0;
    double c = 1.1;
    bool iid = false;
    unsigned threads = 1;
    double tol_feas = 1e-7;
    double tol_obj = 1e-6;
    Index max_iter = 50000;
    double lambda_scale = 1.0;
    bool stage1_only = false;
    // simulate
    Index n = 500, p = 30, K = 30, L = 1, reps = 500;
    // sensitivity
    Index s = 1;
    double u = 3.0;
    int q = 1;
    std::vector<Index> m_grid;
};

// Thrown for bad flags, bad values and failed validation (exit 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flags override values from --config (flat JSON, keys named like the long
// flags with dashes turned into underscores). ENDIV_THREADS backs --threads.
RunConfig parse_config(const std::vector<std::string>& args);

// Everything except threads, which never changes results. Feeding this object
// back through --config reproduces the run.
nlohmann::json provenance(const RunConfig& cfg);

// Runs a parsed config; writes the artifact to cfg.output or `out`.
// Errors propagate as exceptions.
void run(const RunConfig& cfg, std::ostream& out);

// parse + run + error mapping: the whole command line tool.
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace endiv::cli
