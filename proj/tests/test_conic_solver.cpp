#include <doctest.h>

#include <cmath>

#include "endiv/conic_solver.hpp"
#include "endiv/rng.hpp"
#include "endiv/stage1.hpp"
#include "oracles.hpp"

using namespace endiv;
using namespace endiv::conic;

namespace {

Dataset random_instance(Index n, Index p, Index K, std::uint64_t seed)
{
    Dataset d;
    d.X.resize(n, p);
    d.Z.resize(n, K);
    Stream(seed, 1).fill_normal_rows(d.Z);
    Stream(seed, 2).fill_normal_rows(d.X);
    d.X += d.Z.leftCols(p);
    Vector beta(p), noise(n);
    Stream(seed, 3).fill_normal(beta);
    Stream(seed, 4).fill_normal(noise);
    d.y = d.X * beta + 0.3 * noise;
    return d;
}

} // namespace

TEST_SUITE("conic_solver") {

TEST_CASE("a single pinned coordinate")
{
    // |w_1 - 1| enters with weight lambda / tau = 10 > 1, so w = e_1.
    ConvexProgram prog;
    prog.dim = 3;
    prog.lambda = 10;
    prog.tau = 1;
    ResidualBlock b;
    b.offset = Vector::Ones(1);
    b.design = Matrix::Zero(1, 3);
    b.design(0, 0) = 1;
    b.weights = Matrix::Ones(1, 1);
    prog.blocks.push_back(b);
    const auto sol = solve(prog);
    CHECK(sol.status == SolverStatus::converged);
    CHECK(sol.w[0] == doctest::Approx(1).epsilon(1e-6));
    CHECK(std::abs(sol.w[1]) < 1e-9);
    CHECK(std::abs(sol.w[2]) < 1e-9);
    CHECK(sol.objective == doctest::Approx(1).epsilon(1e-6));
}

TEST_CASE("no constraints gives zero")
{
    ConvexProgram prog;
    prog.dim = 4;
    const auto sol = solve(prog);
    CHECK(sol.w == Vector::Zero(4));
    CHECK(sol.objective == 0);
    CHECK(sol.status == SolverStatus::converged);
}

TEST_CASE("residuals are exact recomputations")
{
    ConvexProgram prog;
    prog.dim = 1;
    prog.lambda = 1;
    prog.tau = 0.5;
    ResidualBlock b;
    b.offset = (Vector(2) << 1, 3).finished();
    b.design = Matrix::Zero(2, 1);
    b.weights = Matrix::Ones(2, 1);
    prog.blocks.push_back(b);
    // mean = 2, rms = sqrt(5).
    ProgramPoint feasible{Vector::Zero(1), Vector::Constant(1, 4.0), 4.0};
    CHECK(residuals(prog, feasible).maxCoeff() <= 0);
    // |m| - tau t = 2 - 0.5 * 3 = 0.5 on the moment row.
    ProgramPoint loose{Vector::Zero(1), Vector::Constant(1, 3.0), 3.0};
    const Vector r = residuals(prog, loose);
    CHECK(r[0] == doctest::Approx(0.5));
    CHECK(r[1] == doctest::Approx(std::sqrt(5.0) - 3));
    CHECK(r[2] == 0);
    CHECK_THROWS_AS(residuals(prog, ProgramPoint{Vector::Zero(2), Vector::Zero(1), 0}), DimensionError);
}

TEST_CASE("stage-1 instances agree with a lattice search oracle")
{
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const Index p = 1 + static_cast<Index>(seed % 4);
        const Dataset d = random_instance(60, p, p + 2, seed);
        PenaltyConfig pen;
        pen.tau = 0.15;
        pen.lambda_t = 2.0 + static_cast<double>(seed % 3);
        const auto prog = stage1_program(d, pen);
        const auto sol = solve(prog);
        REQUIRE(sol.status == SolverStatus::converged);

        auto f = [&](const Vector& b) { return oracle::stage1_objective(d, b, pen.lambda_t, pen.tau); };
        const Vector grid = oracle::grid_search(f, Vector::Zero(p), 1.0);
        const double ref = f(grid);
        CAPTURE(seed);
        CHECK(std::abs(sol.objective - ref) <= 1e-4 * (1 + std::abs(ref)));
        CHECK(sol.objective == doctest::Approx(f(sol.w)).epsilon(1e-12));
        CHECK(sol.max_violation <= 1e-7);
        CHECK(sol.max_violation == doctest::Approx(max_violation(prog, tight_point(prog, sol.w))).epsilon(1e-12));
        CHECK(sol.dual_bound <= ref + 1e-9);
    }
}

TEST_CASE("no coordinate step improves the returned point")
{
    const Dataset d = random_instance(80, 4, 6, 99);
    PenaltyConfig pen;
    pen.tau = 0.2;
    pen.lambda_t = 3;
    const auto prog = stage1_program(d, pen);
    const auto sol = solve(prog);
    const double tol = 1e-6 * (1 + sol.objective);
    for (double eps : {1e-3, 1e-5})
        for (Index i = 0; i < prog.dim; ++i)
            for (double sgn : {-1.0, 1.0}) {
                Vector w = sol.w;
                w[i] += sgn * eps;
                CHECK(reduced_objective(prog, w) >= sol.objective - tol);
            }
}

TEST_CASE("scaling the data and dividing lambda leaves w unchanged")
{
    const Dataset d = random_instance(70, 3, 5, 7);
    PenaltyConfig pen;
    pen.tau = 0.2;
    pen.lambda_t = 2;
    auto prog = stage1_program(d, pen);
    const auto base = solve(prog);
    const double g = 4.0;
    for (auto& b : prog.blocks) {
        b.offset *= g;
        b.design *= g;
    }
    prog.lambda /= g;
    const auto scaled = solve(prog);
    CHECK((scaled.w - base.w).lpNorm<Eigen::Infinity>() < 1e-4);
    CHECK(scaled.T == doctest::Approx(g * base.T).epsilon(1e-4));
}

TEST_CASE("identical inputs give bit-identical outputs")
{
    const Dataset d = random_instance(50, 3, 4, 3);
    PenaltyConfig pen;
    pen.tau = 0.2;
    pen.lambda_t = 2;
    const auto prog = stage1_program(d, pen);
    const auto a = solve(prog);
    const auto b = solve(prog);
    CHECK(a.w == b.w);
    CHECK(a.iterations == b.iterations);
    CHECK(a.objective == b.objective);
}

TEST_CASE("iteration cap is reported, not hidden")
{
    const Dataset d = random_instance(50, 3, 4, 5);
    PenaltyConfig pen;
    pen.tau = 0.2;
    pen.lambda_t = 2;
    SolverOptions opts;
    opts.max_iter = 3;
    opts.tol_obj = 1e-12;
    const auto sol = solve(stage1_program(d, pen), opts);
    CHECK(sol.status == SolverStatus::max_iter);
    CHECK(sol.iterations <= 3);
    CHECK(sol.dual_bound <= sol.objective);
}

TEST_CASE("bad options are rejected")
{
    ConvexProgram prog;
    prog.dim = 1;
    SolverOptions opts;
    opts.tol_feas = 0;
    CHECK_THROWS_AS(solve(prog, opts), ParameterError);
    prog.lambda = -1;
    CHECK_THROWS_AS(solve(prog), ParameterError);
}

} // TEST_SUITE
