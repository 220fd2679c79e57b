#pragma once

#include <cstdint>
#include <vector>

#include "endiv/inference.hpp"
#include "endiv/stage1.hpp"
#include "endiv/stage2.hpp"

namespace endiv {

struct PipelineOptions {
    double alpha = 0.05;
    double c = 1.1;
    Index draws = 2000;
    std::uint64_t seed = 0;
    conic::SolverOptions solver{};
    // Multiplies both default lambda_t. 1 keeps the pivotal choice 1/(2 H_n).
    double lambda_scale = 1.0;
};

struct InferenceResult {
    Stage1Fit stage1;
    std::vector<OrthogonalInstrumentFit> instruments;
    std::vector<DebiasedEstimate> estimates;
    ConfidenceBand band;
};

// Stage-1 fit with default penalties.
Stage1Fit estimate_beta(const Dataset& d, double alpha, const conic::SolverOptions& solver = {},
                        double lambda_scale = 1.0);

// Stage-2 fits for every j in S with default penalties.
std::vector<OrthogonalInstrumentFit> estimate_instruments(const Dataset& d, const std::vector<Index>& S,
                                                          double alpha, double c,
                                                          const conic::SolverOptions& solver = {},
                                                          double lambda_scale = 1.0);

// Debiased estimates plus the simultaneous band over S (0-based indices).
InferenceResult estimate_and_band(const Dataset& d, const std::vector<Index>& S,
                                  const PipelineOptions& opts);

} // namespace endiv
