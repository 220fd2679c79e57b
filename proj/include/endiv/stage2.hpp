#pragma once

#include <vector>

#include "endiv/conic_solver.hpp"
#include "endiv/dataset.hpp"

namespace endiv {

// Orthogonalized instrument z'mu for target coordinate j, with the
// auxiliary regression coefficients theta over x_{-j}.
struct OrthogonalInstrumentFit {
    Index j = 0;
    Vector mu_hat;     // K
    Vector theta_hat;  // p - 1, ordered as x_{-j}
    Vector t_hat_z;    // K
    Vector t_hat_x;    // p - 1
    Vector t_hat_xz;   // p - 1
    PenaltyConfig penalties;
    double H2n = 0;
    double objective = 0;
    bool warning = false; // accepted at max_iter with violation <= 10 tol_feas
    conic::SolverSolution diagnostics;
};

// max of max_k ||E_n[z_k^2 x x']||_max, max_l ||E_n[x_l^2 z z']||_max and
// max_k ||E_n[z_k^2 z z']||_max.
double compute_H2n(const Dataset& d);

// lambda_t = 1/(2 H2n), tau = 1.1 Phi^{-1}(1 - alpha/(2|S|(K+p))) / sqrt(n).
// c = 1.1 for independent non-identically distributed data, 1 for i.i.d.
PenaltyConfig default_penalties_stage2(Index n, Index p, Index K, Index S_size, double alpha,
                                       double H2n, double c = 1.1);

conic::ConvexProgram stage2_program(const Dataset& d, Index j, const PenaltyConfig& pen);

OrthogonalInstrumentFit fit_instrument(const Dataset& d, Index j, const PenaltyConfig& pen,
                                       const conic::SolverOptions& opts = {});

struct OrthogonalityReport {
    double max_orthogonality = 0; // max_{l != j} |E_n[x_l z'mu]|
    double omega_hat = 0;         // E_n[x_j z'mu]
    Vector margin_z;              // |E_n[v z_l]| - c tau t_z_l
    Vector margin_x;
    Vector margin_xz;
    double max_margin = 0;
};

OrthogonalityReport orthogonality_residuals(const Dataset& d, const OrthogonalInstrumentFit& fit);

// Columns of X other than j.
Matrix drop_column(const Matrix& X, Index j);

} // namespace endiv
