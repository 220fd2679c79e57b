#include "endiv/conic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace endiv::conic {

std::string to_string(SolverStatus s)
{
    switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::max_iter: return "max_iter";
    case SolverStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

double SolverSolution::relative_gap() const
{
    return (objective - dual_bound) / (1.0 + std::abs(objective));
}

Index ConvexProgram::num_families() const
{
    Index L = 0;
    for (const auto& b : blocks)
        L += b.weights.cols();
    return L;
}

Index ConvexProgram::num_observations() const
{
    return blocks.empty() ? 0 : blocks.front().offset.size();
}

void ConvexProgram::check() const
{
    if (dim < 0)
        throw DimensionError("program dimension must be nonnegative");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ParameterError("program lambda must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ParameterError("program tau must be positive");
    const Index n = num_observations();
    for (const auto& b : blocks) {
        if (b.offset.size() != n || b.design.rows() != n || b.weights.rows() != n)
            throw DimensionError("residual block row counts disagree");
        if (b.first < 0 || b.first + b.design.cols() > dim)
            throw DimensionError("residual block design exceeds the decision dimension");
        if (!b.offset.allFinite() || !b.design.allFinite() || !b.weights.allFinite())
            throw DimensionError("residual block has non-finite entries");
    }
    if (!blocks.empty() && n < 1)
        throw DimensionError("residual blocks need at least one observation");
}

namespace {

Vector block_residual(const ResidualBlock& b, const Vector& w)
{
    return b.offset - b.design * w.segment(b.first, b.design.cols());
}

void require_dim(const ConvexProgram& prog, const Vector& w)
{
    if (w.size() != prog.dim)
        throw DimensionError("point has dimension " + std::to_string(w.size()) +
                             ", program has " + std::to_string(prog.dim));
}

} // namespace

FamilyValues family_values(const ConvexProgram& prog, const Vector& w)
{
    require_dim(prog, w);
    FamilyValues out;
    out.moment.resize(prog.num_families());
    out.rms.resize(prog.num_families());
    const double n = static_cast<double>(prog.num_observations());
    Index l0 = 0;
    for (const auto& b : prog.blocks) {
        const Vector r = block_residual(b, w);
        const Index L = b.weights.cols();
        out.moment.segment(l0, L) = b.weights.transpose() * r / n;
        out.rms.segment(l0, L) =
            ((b.weights.array().square().colwise() * r.array().square()).colwise().sum() / n)
                .sqrt()
                .transpose();
        l0 += L;
    }
    return out;
}

Vector natural_slack(const ConvexProgram& prog, const Vector& w)
{
    auto fv = family_values(prog, w);
    return fv.rms.cwiseMax(fv.moment.cwiseAbs() / prog.tau);
}

ProgramPoint tight_point(const ConvexProgram& prog, const Vector& w)
{
    ProgramPoint x;
    x.w = w;
    x.t = natural_slack(prog, w);
    x.T = x.t.size() > 0 ? x.t.maxCoeff() : 0.0;
    return x;
}

double objective(const ConvexProgram& prog, const ProgramPoint& x)
{
    require_dim(prog, x.w);
    return x.w.lpNorm<1>() + prog.lambda * x.T;
}

double reduced_objective(const ConvexProgram& prog, const Vector& w)
{
    return objective(prog, tight_point(prog, w));
}

Vector residuals(const ConvexProgram& prog, const ProgramPoint& x)
{
    require_dim(prog, x.w);
    const Index L = prog.num_families();
    if (x.t.size() != L)
        throw DimensionError("slack vector has length " + std::to_string(x.t.size()) +
                             ", program has " + std::to_string(L) + " families");
    auto fv = family_values(prog, x.w);
    Vector out(3 * L);
    for (Index l = 0; l < L; ++l) {
        out[3 * l] = std::abs(fv.moment[l]) - prog.tau * x.t[l];
        out[3 * l + 1] = fv.rms[l] - x.t[l];
        out[3 * l + 2] = x.t[l] - x.T;
    }
    return out;
}

double max_violation(const ConvexProgram& prog, const ProgramPoint& x)
{
    Vector r = residuals(prog, x);
    return r.size() > 0 ? std::max(0.0, r.maxCoeff()) : 0.0;
}

namespace {

// Dual variable: one n-vector per family for the root-mean-square part and
// one scalar per family for the moment part, grouped by residual block.
struct Dual {
    std::vector<Matrix> rms;
    std::vector<Vector> mom;

    void zeros_like(const ConvexProgram& prog)
    {
        rms.clear();
        mom.clear();
        for (const auto& b : prog.blocks) {
            rms.emplace_back(Matrix::Zero(b.weights.rows(), b.weights.cols()));
            mom.emplace_back(Vector::Zero(b.weights.cols()));
        }
    }
    double squared_distance(const Dual& o) const
    {
        double s = 0;
        for (std::size_t k = 0; k < rms.size(); ++k)
            s += (rms[k] - o.rms[k]).squaredNorm() + (mom[k] - o.mom[k]).squaredNorm();
        return s;
    }
};

// Linear operator of the reduced form after column equilibration:
//   (A x)_{rms, l} = d_l .* (R x) / sqrt(n),   (A x)_{mom, l} = d_l' R x / (n tau)
// with x the equilibrated coordinates w = x ./ scale.
class Operator {
public:
    Operator(const ConvexProgram& prog) : prog_(prog)
    {
        n_ = static_cast<double>(prog.num_observations());
        sqrt_n_ = std::sqrt(n_);
        scale_ = Vector::Zero(prog.dim);
        for (const auto& b : prog.blocks) {
            const Vector wsq = b.weights.array().square().rowwise().sum();
            const Matrix G = b.weights.transpose() * b.design;
            for (Index i = 0; i < b.design.cols(); ++i) {
                const double rms_part = b.design.col(i).array().square().matrix().dot(wsq) / n_;
                const double mom_part = G.col(i).squaredNorm() / (n_ * n_ * prog.tau * prog.tau);
                scale_[b.first + i] += rms_part + mom_part;
            }
        }
        for (Index i = 0; i < prog.dim; ++i)
            scale_[i] = scale_[i] > 0.0 ? std::sqrt(scale_[i]) : 1.0;
        for (const auto& b : prog.blocks)
            designs_.emplace_back(b.design * scale_.segment(b.first, b.design.cols()).cwiseInverse().asDiagonal());
    }

    const Vector& scale() const { return scale_; }

    // v += step * (A x - b); the b term is skipped when with_offset is false.
    void forward_accumulate(const Vector& x, double step, Dual& v, bool with_offset) const
    {
        for (std::size_t k = 0; k < prog_.blocks.size(); ++k) {
            const auto& b = prog_.blocks[k];
            Vector u = designs_[k] * x.segment(b.first, b.design.cols());
            if (with_offset)
                u -= b.offset;
            v.rms[k].noalias() +=
                (step / sqrt_n_) * (b.weights.array().colwise() * u.array()).matrix();
            v.mom[k].noalias() += (step / (n_ * prog_.tau)) * (b.weights.transpose() * u);
        }
    }

    // Returns A' v and, through offset_dot, <b, v>.
    Vector adjoint(const Dual& v, double* offset_dot = nullptr) const
    {
        Vector out = Vector::Zero(prog_.dim);
        double bv = 0.0;
        for (std::size_t k = 0; k < prog_.blocks.size(); ++k) {
            const auto& b = prog_.blocks[k];
            Vector q = b.weights.cwiseProduct(v.rms[k]).rowwise().sum() / sqrt_n_;
            q.noalias() += b.weights * v.mom[k] / (n_ * prog_.tau);
            out.segment(b.first, b.design.cols()).noalias() += designs_[k].transpose() * q;
            bv += b.offset.dot(q);
        }
        if (offset_dot)
            *offset_dot = bv;
        return out;
    }

    double norm_estimate() const
    {
        if (prog_.dim == 0 || prog_.num_families() == 0)
            return 0.0;
        Vector x = Vector::Ones(prog_.dim) / std::sqrt(static_cast<double>(prog_.dim));
        Dual v;
        double sigma = 0.0;
        for (int it = 0; it < 100; ++it) {
            v.zeros_like(prog_);
            forward_accumulate(x, 1.0, v, false);
            Vector y = adjoint(v);
            const double ny = y.norm();
            if (ny == 0.0)
                return 0.0;
            const double next = std::sqrt(ny);
            x = y / ny;
            if (it > 10 && std::abs(next - sigma) <= 1e-6 * next) {
                sigma = next;
                break;
            }
            sigma = next;
        }
        return sigma;
    }

private:
    const ConvexProgram& prog_;
    double n_ = 1.0;
    double sqrt_n_ = 1.0;
    Vector scale_;
    std::vector<Matrix> designs_;
};

// Euclidean projection onto { v : sum over blocks of ||v_block||_2 <= radius }.
void project_group_l1(Dual& v, double radius, std::vector<double>& norms, std::vector<double>& sorted)
{
    norms.clear();
    double total = 0.0;
    for (std::size_t k = 0; k < v.rms.size(); ++k) {
        for (Index l = 0; l < v.rms[k].cols(); ++l) {
            norms.push_back(v.rms[k].col(l).norm());
            total += norms.back();
        }
        for (Index l = 0; l < v.mom[k].size(); ++l) {
            norms.push_back(std::abs(v.mom[k][l]));
            total += norms.back();
        }
    }
    if (total <= radius)
        return;
    sorted = norms;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumulative += sorted[i];
        const double candidate = (cumulative - radius) / static_cast<double>(i + 1);
        if (i + 1 == sorted.size() || sorted[i + 1] <= candidate) {
            theta = candidate;
            break;
        }
    }
    std::size_t idx = 0;
    auto shrink = [theta](double a) { return a > theta ? (a - theta) / a : 0.0; };
    for (std::size_t k = 0; k < v.rms.size(); ++k) {
        for (Index l = 0; l < v.rms[k].cols(); ++l)
            v.rms[k].col(l) *= shrink(norms[idx++]);
        for (Index l = 0; l < v.mom[k].size(); ++l)
            v.mom[k][l] *= shrink(norms[idx++]);
    }
}

} // namespace

SolverSolution solve(const ConvexProgram& prog, const SolverOptions& opts)
{
    prog.check();
    if (!(opts.tol_feas > 0.0) || !(opts.tol_obj > 0.0) || opts.max_iter < 1)
        throw ParameterError("solver tolerances must be positive and max_iter >= 1");

    SolverSolution sol;
    const Index d = prog.dim;
    auto finish = [&](const Vector& w, double dual_bound, int iters, bool converged) {
        ProgramPoint pt = tight_point(prog, w);
        sol.w = pt.w;
        sol.t = pt.t;
        sol.T = pt.T;
        sol.objective = objective(prog, pt);
        sol.dual_bound = std::min(dual_bound, sol.objective);
        sol.max_violation = max_violation(prog, pt);
        sol.iterations = iters;
        if (!std::isfinite(sol.objective))
            sol.status = SolverStatus::infeasible;
        else if (converged && sol.max_violation <= opts.tol_feas)
            sol.status = SolverStatus::converged;
        else
            sol.status = SolverStatus::max_iter;
        return sol;
    };

    if (d == 0 || prog.num_families() == 0)
        return finish(Vector::Zero(d), reduced_objective(prog, Vector::Zero(d)), 0, true);

    const Operator op(prog);
    const Vector& scale = op.scale();
    const double norm_a = op.norm_estimate();
    if (norm_a == 0.0) // no coordinate moves any constraint
        return finish(Vector::Zero(d), reduced_objective(prog, Vector::Zero(d)), 0, true);

    const double step = 0.9 / norm_a;
    double omega = 1.0; // primal weight: eta = step / omega, sigma = step * omega

    Vector x = Vector::Zero(d);
    Dual v;
    v.zeros_like(prog);
    Vector atv = Vector::Zero(d);

    Vector x_avg = x, atv_avg = atv;
    Dual v_avg = v;
    int avg_count = 0;

    Vector x_last = x;
    Dual v_last = v;

    std::vector<double> norms, sorted;

    auto primal_value = [&](const Vector& xs) {
        return reduced_objective(prog, xs.cwiseQuotient(scale));
    };
    auto dual_value = [&](const Vector& a, const Dual& dv) {
        double bv = 0.0;
        op.adjoint(dv, &bv);
        double rho = 1.0;
        for (Index i = 0; i < d; ++i)
            rho = std::max(rho, std::abs(a[i]) * scale[i]);
        return -bv / rho;
    };

    double best_primal = primal_value(x);
    Vector best_x = x;
    double best_dual = 0.0; // v = 0 is dual feasible
    double gap_at_restart = best_primal - best_dual;
    double last_candidate_gap = std::numeric_limits<double>::infinity();
    int since_restart = 0;
    const int check_every = 32;

    auto converged = [&] {
        return best_primal - best_dual <= opts.tol_obj * (1.0 + std::abs(best_primal));
    };
    if (converged())
        return finish(best_x.cwiseQuotient(scale), best_dual, 0, true);

    int iter = 0;
    while (iter < opts.max_iter) {
        ++iter;
        ++since_restart;
        const double eta = step / omega;
        const double sigma = step * omega;

        Vector x_new = x - eta * atv;
        for (Index i = 0; i < d; ++i) {
            const double thr = eta / scale[i];
            const double a = x_new[i];
            x_new[i] = a > thr ? a - thr : (a < -thr ? a + thr : 0.0);
        }
        const Vector x_bar = 2.0 * x_new - x;
        op.forward_accumulate(x_bar, sigma, v, true);
        project_group_l1(v, prog.lambda, norms, sorted);
        x = x_new;
        atv = op.adjoint(v);

        ++avg_count;
        const double wgt = 1.0 / avg_count;
        x_avg += wgt * (x - x_avg);
        atv_avg += wgt * (atv - atv_avg);
        for (std::size_t k = 0; k < v.rms.size(); ++k) {
            v_avg.rms[k] += wgt * (v.rms[k] - v_avg.rms[k]);
            v_avg.mom[k] += wgt * (v.mom[k] - v_avg.mom[k]);
        }

        if (iter % check_every != 0 && iter != opts.max_iter)
            continue;

        const double p_cur = primal_value(x);
        const double d_cur = dual_value(atv, v);
        const double p_avg = primal_value(x_avg);
        const double d_avg = dual_value(atv_avg, v_avg);
        if (p_cur < best_primal) {
            best_primal = p_cur;
            best_x = x;
        }
        if (p_avg < best_primal) {
            best_primal = p_avg;
            best_x = x_avg;
        }
        best_dual = std::max({best_dual, d_cur, d_avg});
        if (converged())
            return finish(best_x.cwiseQuotient(scale), best_dual, iter, true);

        const double gap_cur = p_cur - d_cur;
        const double gap_avg = p_avg - d_avg;
        const bool use_avg = gap_avg < gap_cur;
        const double candidate_gap = use_avg ? gap_avg : gap_cur;
        const bool restart = candidate_gap <= 0.2 * gap_at_restart ||
                             (candidate_gap <= 0.8 * gap_at_restart && candidate_gap > last_candidate_gap) ||
                             since_restart >= std::max(check_every, iter / 3);
        last_candidate_gap = candidate_gap;
        if (!restart)
            continue;

        if (use_avg) {
            x = x_avg;
            v = v_avg;
            atv = atv_avg;
        }
        const double dx = (x - x_last).norm();
        const double dv = std::sqrt(v.squared_distance(v_last));
        // A side that did not move at all (the dual parked on a vertex of
        // its ball, say) carries no ratio; shift weight toward it instead.
        const double still = 1e-9 * std::max(dx, dv);
        if (dx > still && dv > still)
            omega = std::exp(0.5 * std::log(dv / dx) + 0.5 * std::log(omega));
        else if (dx > still)
            omega *= 0.25;
        else if (dv > still)
            omega *= 4.0;
        x_last = x;
        v_last = v;
        x_avg = x;
        v_avg = v;
        atv_avg = atv;
        avg_count = 0;
        gap_at_restart = candidate_gap;
        last_candidate_gap = std::numeric_limits<double>::infinity();
        since_restart = 0;
    }
    return finish(best_x.cwiseQuotient(scale), best_dual, iter, false);
}

} // namespace endiv::conic
