#include "endiv/stage2.hpp"

#include <cmath>
#include <sstream>

#include "endiv/normal.hpp"

namespace endiv {

Matrix drop_column(const Matrix& X, Index j)
{
    Matrix out(X.rows(), X.cols() - 1);
    out.leftCols(j) = X.leftCols(j);
    out.rightCols(X.cols() - j - 1) = X.rightCols(X.cols() - j - 1);
    return out;
}

// Same diagonal argument as compute_H1n: each moment matrix is PSD. The
// x^2 zz' family shares its diagonal entries E_n[x_l^2 z_k^2] with z^2 xx'.
double compute_H2n(const Dataset& d)
{
    const Matrix z2 = d.Z.array().square();
    const Matrix x2 = d.X.array().square();
    const double zx = (z2.transpose() * x2).maxCoeff();
    const double zz = (z2.transpose() * z2).maxCoeff();
    return std::max(zx, zz) / static_cast<double>(d.n());
}

PenaltyConfig default_penalties_stage2(Index n, Index p, Index K, Index S_size, double alpha,
                                       double H2n, double c)
{
    if (n < 2 || p < 1 || K < 1 || S_size < 1)
        throw ParameterError("default_penalties_stage2: need n >= 2, p, K, |S| >= 1");
    if (!(alpha > 1.0 / static_cast<double>(n) && alpha < 1.0))
        throw ParameterError("alpha must lie in (1/n, 1)");
    if (!(c >= 1.0))
        throw ParameterError("c must be >= 1");
    if (!(H2n > 0.0))
        throw ParameterError("H2n must be positive");
    PenaltyConfig pen;
    pen.alpha = alpha;
    pen.c = c;
    pen.lambda_t = 1.0 / (2.0 * H2n);
    const double level = alpha / (2.0 * static_cast<double>(S_size) * static_cast<double>(K + p));
    pen.tau = 1.1 * normal_quantile(1.0 - level) / std::sqrt(static_cast<double>(n));
    return pen;
}

conic::ConvexProgram stage2_program(const Dataset& d, Index j, const PenaltyConfig& pen)
{
    if (j < 0 || j >= d.p())
        throw DimensionError("target index " + std::to_string(j) + " outside [0, " +
                             std::to_string(d.p()) + ")");
    const Index K = d.K();
    const Index p = d.p();
    const Matrix X_rest = drop_column(d.X, j);

    conic::ConvexProgram prog;
    prog.dim = K + p - 1;
    prog.lambda = pen.lambda_t;
    prog.tau = pen.c * pen.tau;

    // v = x_j - Z mu - X_{-j} theta, tested against z_l and x_l.
    conic::ResidualBlock v_block;
    v_block.offset = d.X.col(j);
    v_block.design.resize(d.n(), K + p - 1);
    v_block.design << d.Z, X_rest;
    v_block.first = 0;
    v_block.weights = v_block.design;
    prog.blocks.push_back(std::move(v_block));

    // -z'mu tested against x_l: the orthogonality family.
    if (p > 1)
        prog.blocks.push_back({Vector::Zero(d.n()), d.Z, 0, X_rest});
    return prog;
}

OrthogonalInstrumentFit fit_instrument(const Dataset& d, Index j, const PenaltyConfig& pen,
                                       const conic::SolverOptions& opts)
{
    require_valid(d);
    if (!(pen.lambda_t > 0.0) || !(pen.tau > 0.0) || !(pen.c >= 1.0))
        throw ParameterError("stage-2 penalties must be positive with c >= 1");
    const auto prog = stage2_program(d, j, pen);
    auto sol = conic::solve(prog, opts);
    if (sol.status == conic::SolverStatus::infeasible)
        throw SolverError("stage-2 solver reported infeasibility for j = " + std::to_string(j));

    OrthogonalInstrumentFit fit;
    if (sol.status != conic::SolverStatus::converged) {
        if (sol.max_violation > 10.0 * opts.tol_feas) {
            std::ostringstream msg;
            msg << "stage-2 solver did not converge for j = " << j
                << ": iterations=" << sol.iterations << " relative_gap=" << sol.relative_gap()
                << " violation=" << sol.max_violation;
            throw SolverError(msg.str());
        }
        fit.warning = true;
    }
    const Index K = d.K();
    const Index p = d.p();
    fit.j = j;
    fit.mu_hat = sol.w.head(K);
    fit.theta_hat = sol.w.tail(p - 1);
    fit.t_hat_z = sol.t.head(K);
    fit.t_hat_x = sol.t.segment(K, p - 1);
    fit.t_hat_xz = sol.t.tail(p - 1);
    fit.penalties = pen;
    fit.H2n = compute_H2n(d);
    fit.objective = sol.objective;
    fit.diagnostics = std::move(sol);
    return fit;
}

OrthogonalityReport orthogonality_residuals(const Dataset& d, const OrthogonalInstrumentFit& fit)
{
    const Index j = fit.j;
    if (fit.mu_hat.size() != d.K() || fit.theta_hat.size() != d.p() - 1 || j < 0 || j >= d.p())
        throw DimensionError("instrument fit does not match the dataset");
    const double n = static_cast<double>(d.n());
    const double ctau = fit.penalties.c * fit.penalties.tau;
    const Matrix X_rest = drop_column(d.X, j);
    const Vector zmu = d.Z * fit.mu_hat;
    const Vector v = d.X.col(j) - zmu - X_rest * fit.theta_hat;

    auto margins = [&](const Matrix& W, const Vector& r, const Vector& t) {
        const Vector m = W.transpose() * r / n;
        return Vector(m.cwiseAbs() - ctau * t);
    };
    OrthogonalityReport rep;
    rep.omega_hat = d.X.col(j).dot(zmu) / n;
    const Vector orth = X_rest.transpose() * zmu / n;
    rep.max_orthogonality = orth.size() > 0 ? orth.cwiseAbs().maxCoeff() : 0.0;
    rep.margin_z = margins(d.Z, v, fit.t_hat_z);
    rep.margin_x = margins(X_rest, v, fit.t_hat_x);
    rep.margin_xz = orth.cwiseAbs() - ctau * fit.t_hat_xz;
    rep.max_margin = rep.margin_z.size() ? rep.margin_z.maxCoeff() : 0.0;
    if (rep.margin_x.size())
        rep.max_margin = std::max({rep.max_margin, rep.margin_x.maxCoeff(), rep.margin_xz.maxCoeff()});
    return rep;
}

} // namespace endiv
