#include "endiv/stage1.hpp"

#include <cmath>
#include <sstream>

#include "endiv/normal.hpp"

namespace endiv {

// Each E_n[z_l^2 x x'] is positive semidefinite, so its largest absolute
// entry sits on the diagonal: |M_ab| <= sqrt(M_aa M_bb).
double compute_H1n(const Dataset& d)
{
    const Matrix m = d.Z.array().square().matrix().transpose() * d.X.array().square().matrix();
    return m.size() > 0 ? m.maxCoeff() / static_cast<double>(d.n()) : 0.0;
}

PenaltyConfig default_penalties_stage1(Index n, Index p, double alpha, double H1n)
{
    if (n < 2 || p < 1)
        throw ParameterError("default_penalties_stage1: need n >= 2 and p >= 1");
    if (!(alpha > 1.0 / static_cast<double>(n) && alpha < 1.0))
        throw ParameterError("alpha must lie in (1/n, 1)");
    if (!(H1n > 0.0))
        throw ParameterError("H1n must be positive");
    PenaltyConfig pen;
    pen.alpha = alpha;
    pen.lambda_t = 1.0 / (2.0 * H1n);
    pen.tau = normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(p))) /
              std::sqrt(static_cast<double>(n));
    pen.c = 1.0;
    return pen;
}

conic::ConvexProgram stage1_program(const Dataset& d, const PenaltyConfig& pen)
{
    conic::ConvexProgram prog;
    prog.dim = d.p();
    prog.lambda = pen.lambda_t;
    prog.tau = pen.tau;
    prog.blocks.push_back({d.y, d.X, 0, d.Z});
    return prog;
}

Stage1Fit fit_beta(const Dataset& d, const PenaltyConfig& pen, const conic::SolverOptions& opts)
{
    require_valid(d);
    if (!(pen.lambda_t > 0.0) || !(pen.tau > 0.0))
        throw ParameterError("stage-1 penalties must be positive");
    const auto prog = stage1_program(d, pen);
    auto sol = conic::solve(prog, opts);
    if (sol.status == conic::SolverStatus::infeasible)
        throw SolverError("stage-1 solver reported infeasibility; the program is always feasible");
    if (sol.status != conic::SolverStatus::converged) {
        std::ostringstream msg;
        msg << "stage-1 solver did not converge: status=" << conic::to_string(sol.status)
            << " iterations=" << sol.iterations << " objective=" << sol.objective
            << " relative_gap=" << sol.relative_gap() << " violation=" << sol.max_violation;
        throw SolverError(msg.str());
    }
    Stage1Fit fit;
    fit.beta_hat = sol.w;
    fit.t_hat = sol.t;
    fit.penalties = pen;
    fit.H1n = compute_H1n(d);
    fit.objective = sol.objective;
    fit.diagnostics = std::move(sol);
    return fit;
}

FeasibilityReport check_feasibility(const Dataset& d, const Vector& beta, const PenaltyConfig& pen)
{
    if (beta.size() != d.p())
        throw DimensionError("beta has length " + std::to_string(beta.size()) + ", expected " +
                             std::to_string(d.p()));
    const double n = static_cast<double>(d.n());
    const Vector r = d.y - d.X * beta;
    FeasibilityReport rep;
    rep.moment = d.Z.transpose() * r / n;
    rep.t = ((d.Z.array().colwise() * r.array()).square().colwise().sum() / n).sqrt().transpose();
    rep.margin = rep.moment.cwiseAbs() - pen.tau * rep.t;
    rep.max_margin = rep.margin.size() > 0 ? rep.margin.maxCoeff() : 0.0;
    rep.feasible = rep.max_margin <= 0.0;
    return rep;
}

} // namespace endiv
