#pragma once

#include <string>
#include <vector>

#include "endiv/types.hpp"

namespace endiv::conic {

// A residual map r(w) = offset - design * w[first : first + design.cols())
// shared by a group of self-normalized constraint families. Family l uses
// the multiplier vector d_l = weights.col(l) and imposes
//
//     |mean(d_l .* r(w))| <= tau * t_l,
//     sqrt(mean((d_l .* r(w))^2)) <= t_l,
//     t_l <= T.
struct ResidualBlock {
    Vector offset;    // n
    Matrix design;    // n x m
    Index first = 0;  // coordinate of w acted on by design.col(0)
    Matrix weights;   // n x L
};

// minimize ||w||_1 + lambda * T over (w, t, T) subject to every family of
// every block. All coordinates of w carry the l1 penalty.
struct ConvexProgram {
    Index dim = 0;
    double lambda = 1.0;
    double tau = 1.0;
    std::vector<ResidualBlock> blocks;

    Index num_families() const;
    Index num_observations() const;
    // Throws DimensionError on inconsistent shapes and ParameterError on bad scalars.
    void check() const;
};

// A point of the full (epigraph) formulation.
struct ProgramPoint {
    Vector w;
    Vector t;     // one slack per family, in block order
    double T = 0; // epigraph variable for max(t)
};

struct SolverOptions {
    double tol_feas = 1e-7;
    double tol_obj = 1e-6;   // relative duality gap
    int max_iter = 50000;
};

enum class SolverStatus { converged, max_iter, infeasible };

std::string to_string(SolverStatus s);

struct SolverSolution {
    Vector w;
    Vector t;              // natural slack t_l(w)
    double T = 0;
    double objective = 0;
    double dual_bound = 0; // certified lower bound on the optimum
    double max_violation = 0;
    int iterations = 0;
    SolverStatus status = SolverStatus::max_iter;

    double relative_gap() const;
};

// Per-family moment mean(d_l .* r(w)) and root mean square of d_l .* r(w).
struct FamilyValues {
    Vector moment;
    Vector rms;
};

FamilyValues family_values(const ConvexProgram& prog, const Vector& w);

// Smallest feasible slack for each family: max(rms_l, |moment_l| / tau).
Vector natural_slack(const ConvexProgram& prog, const Vector& w);

// (w, natural slack, max slack): the cheapest feasible completion of w.
ProgramPoint tight_point(const ConvexProgram& prog, const Vector& w);

// ||w||_1 + lambda * T of a full point.
double objective(const ConvexProgram& prog, const ProgramPoint& x);

// Objective of the tight completion of w (the reduced form).
double reduced_objective(const ConvexProgram& prog, const Vector& w);

// Signed violation of every constraint: for family l, entries 3l, 3l+1, 3l+2
// hold |m_l| - tau t_l, rms_l - t_l and t_l - T. Feasible points are <= 0.
Vector residuals(const ConvexProgram& prog, const ProgramPoint& x);

double max_violation(const ConvexProgram& prog, const ProgramPoint& x);

// Restarted primal-dual hybrid gradient on the reduced form
//     min ||w||_1 + lambda * max_l max(rms_l(w), |m_l(w)| / tau)
// with column equilibration and a duality-gap stopping rule. Starts at zero
// with fixed step rules, so the output is a pure function of the input.
SolverSolution solve(const ConvexProgram& prog, const SolverOptions& opts = {});

} // namespace endiv::conic
