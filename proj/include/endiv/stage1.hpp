#pragma once

#include "endiv/conic_solver.hpp"
#include "endiv/dataset.hpp"

namespace endiv {

struct Stage1Fit {
    Vector beta_hat;   // p
    Vector t_hat;      // K, natural slack at beta_hat
    PenaltyConfig penalties;
    double H1n = 0;
    double objective = 0; // ||beta||_1 + lambda_t ||t||_inf
    conic::SolverSolution diagnostics;
};

// max_l || E_n[z_l^2 x x'] ||_max
double compute_H1n(const Dataset& d);

// lambda_t = 1/(2 H1n), tau = Phi^{-1}(1 - alpha/(2p)) / sqrt(n); alpha in (1/n, 1).
PenaltyConfig default_penalties_stage1(Index n, Index p, double alpha, double H1n);

// The self-normalized program in (beta, t); exposed for diagnostics and tests.
conic::ConvexProgram stage1_program(const Dataset& d, const PenaltyConfig& pen);

// Throws SolverError carrying the solver summary when the gap is not closed.
Stage1Fit fit_beta(const Dataset& d, const PenaltyConfig& pen, const conic::SolverOptions& opts = {});

struct FeasibilityReport {
    Vector t;        // t_l(beta) = E_n[z_l^2 (y - x'beta)^2]^{1/2}
    Vector moment;   // E_n[(y - x'beta) z_l]
    Vector margin;   // |moment_l| - tau t_l; feasible when <= 0
    bool feasible = false;
    double max_margin = 0;
};

FeasibilityReport check_feasibility(const Dataset& d, const Vector& beta, const PenaltyConfig& pen);

} // namespace endiv
