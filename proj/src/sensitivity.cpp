#include "endiv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/binomial.hpp>

#include "endiv/rng.hpp"

namespace endiv {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kEnumBudget = 1e6;

// Advances a sorted index set to the next k-subset of [0, n); false at the end.
bool next_combination(std::vector<Index>& c, Index n)
{
    const Index k = static_cast<Index>(c.size());
    for (Index i = k - 1; i >= 0; --i) {
        if (c[i] < n - k + i) {
            ++c[i];
            for (Index j = i + 1; j < k; ++j)
                c[j] = c[j - 1] + 1;
            return true;
        }
    }
    return false;
}

std::vector<Index> first_combination(Index k)
{
    std::vector<Index> c(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i)
        c[i] = i;
    return c;
}

double choose(Index n, Index k)
{
    if (k < 0 || k > n)
        return 0;
    return boost::math::binomial_coefficient<double>(static_cast<unsigned>(n), static_cast<unsigned>(k));
}

// Is theta in the union over |J| <= s of C_J(u)? The best J holds the s largest |theta_i|.
bool in_cone(const Vector& theta, Index s, double u)
{
    std::vector<double> a(theta.data(), theta.data() + theta.size());
    for (auto& v : a)
        v = std::abs(v);
    std::sort(a.begin(), a.end(), std::greater<>());
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        (static_cast<Index>(i) < s ? head : tail) += a[i];
    return tail <= u * head * (1 + 1e-12);
}

double ratio_q2(const Matrix& Psi, const Vector& theta)
{
    const double nrm = theta.norm();
    return nrm > 0 ? (Psi * theta).lpNorm<Eigen::Infinity>() / nrm : std::numeric_limits<double>::infinity();
}

// Random-perturbation descent on ||Psi theta||_inf / ||theta||_2 inside the cone.
double refine_q2(const Matrix& Psi, Vector theta, Index s, double u, Stream& rng, int steps)
{
    double best = ratio_q2(Psi, theta);
    theta /= theta.norm();
    double step = 0.1;
    Vector trial(theta.size());
    for (int it = 0; it < steps; ++it) {
        for (Index i = 0; i < trial.size(); ++i)
            trial[i] = theta[i] + step * rng.normal();
        if (in_cone(trial, s, u)) {
            const double r = ratio_q2(Psi, trial);
            if (r < best) {
                best = r;
                theta = trial / trial.norm();
                continue;
            }
        }
        step = std::max(step * 0.97, 1e-6);
    }
    return best;
}

} // namespace

LpResult simplex_max(const Matrix& A, const Vector& b, const Vector& c)
{
    const Index m = A.rows(), n = A.cols();
    if (b.size() != m || c.size() != n)
        throw DimensionError("simplex_max: dimension mismatch");
    if ((b.array() < 0).any())
        throw ParameterError("simplex_max needs b >= 0");

    // Tableau columns: n structural, m slack, rhs. Last row holds -c.
    Matrix T = Matrix::Zero(m + 1, n + m + 1);
    T.topLeftCorner(m, n) = A;
    T.block(0, n, m, m).setIdentity();
    T.col(n + m).head(m) = b;
    T.row(m).head(n) = -c.transpose();
    std::vector<Index> basis(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i)
        basis[i] = n + i;

    LpResult res;
    const Index max_pivots = 50 * (n + m) + 1000;
    for (Index pivots = 0;; ++pivots) {
        if (pivots > max_pivots)
            throw SolverError("simplex_max: pivot limit reached");
        Index enter = -1;
        for (Index j = 0; j < n + m; ++j)
            if (T(m, j) < -kPivotTol) {
                enter = j;
                break;
            }
        if (enter < 0)
            break;
        Index leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < m; ++i) {
            if (T(i, enter) > kPivotTol) {
                const double r = T(i, n + m) / T(i, enter);
                const bool tie = leave >= 0 && std::abs(r - best) <= 1e-14 * (1 + std::abs(best));
                if (tie ? basis[i] < basis[leave] : r < best) {
                    best = tie ? std::min(best, r) : r;
                    leave = i;
                }
            }
        }
        if (leave < 0) {
            res.unbounded = true;
            res.value = std::numeric_limits<double>::infinity();
            return res;
        }
        T.row(leave) /= T(leave, enter);
        for (Index i = 0; i <= m; ++i)
            if (i != leave && T(i, enter) != 0.0)
                T.row(i) -= T(i, enter) * T.row(leave);
        basis[leave] = enter;
    }
    res.x = Vector::Zero(n);
    for (Index i = 0; i < m; ++i)
        if (basis[i] < n)
            res.x[basis[i]] = T(i, n + m);
    res.value = c.dot(res.x);
    return res;
}

double kappa_exact_small(const Matrix& Psi, Index s, double u, int q, std::uint64_t seed)
{
    const Index K = Psi.rows(), p = Psi.cols();
    if (q != 1 && q != 2)
        throw ParameterError("q must be 1 or 2");
    if (!(u > 0))
        throw ParameterError("u must be positive");
    if (s < 1)
        throw ParameterError("s must be at least 1");
    if (p > 12 || s > 3)
        throw BudgetError("exact sensitivity needs p <= 12 and s <= 3; use kappa_lower_bound instead");
    if (K < 1 || p < 1)
        throw DimensionError("Psi must be nonempty");
    s = std::min(s, p);

    // C_J(u) grows with J, so only |J| = s matters. theta -> -theta fixes sign_0 = +1.
    Matrix A(2 * K + 1, p);
    Vector b = Vector::Zero(2 * K + 1);
    b.head(2 * K).setOnes();
    const Vector ones = Vector::Ones(p);
    double kappa1 = std::numeric_limits<double>::infinity();
    std::vector<Vector> vertices;
    std::vector<double> vertex_ratio;
    auto J = first_combination(s);
    do {
        Vector cone = Vector::Ones(p);
        for (Index j : J)
            cone[j] = -u;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (p - 1)); ++mask) {
            Vector sign(p);
            sign[0] = 1.0;
            for (Index i = 1; i < p; ++i)
                sign[i] = (mask >> (i - 1)) & 1 ? -1.0 : 1.0;
            const Matrix Ps = Psi * sign.asDiagonal();
            A.topRows(K) = Ps;
            A.middleRows(K, K) = -Ps;
            A.row(2 * K) = cone.transpose();
            const auto lp = simplex_max(A, b, ones);
            if (lp.unbounded) {
                kappa1 = 0;
                if (q == 1)
                    return 0.0;
                continue;
            }
            const double k = lp.value > 0 ? 1.0 / lp.value : std::numeric_limits<double>::infinity();
            kappa1 = std::min(kappa1, k);
            if (q == 2 && lp.value > 0) {
                Vector theta = sign.cwiseProduct(lp.x);
                vertex_ratio.push_back(ratio_q2(Psi, theta));
                vertices.push_back(std::move(theta));
            }
        }
    } while (next_combination(J, p));
    if (q == 1)
        return kappa1;

    // q = 2: the exact kappa_1 <= kappa_2 and every cone point gives an upper bound.
    Stream rng(seed, 0x5e45);
    std::vector<std::pair<double, Vector>> starts;
    std::vector<std::size_t> order(vertices.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto c) { return vertex_ratio[a] < vertex_ratio[c]; });
    for (std::size_t i = 0; i < std::min<std::size_t>(order.size(), 16); ++i)
        starts.emplace_back(vertex_ratio[order[i]], vertices[order[i]]);

    std::vector<std::pair<double, Vector>> samples;
    for (int r = 0; r < 4000; ++r) {
        std::vector<Index> perm(static_cast<std::size_t>(p));
        for (Index i = 0; i < p; ++i)
            perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        Vector theta = Vector::Zero(p);
        double head = 0;
        for (Index i = 0; i < s; ++i) {
            theta[perm[i]] = -std::log(1.0 - rng.uniform());
            head += theta[perm[i]];
        }
        const double frac = rng.uniform();
        double tail = 0;
        Vector rest = Vector::Zero(p);
        for (Index i = s; i < p; ++i) {
            rest[perm[i]] = -std::log(1.0 - rng.uniform());
            tail += rest[perm[i]];
        }
        if (tail > 0)
            theta += rest * (frac * u * head / tail);
        for (Index i = 0; i < p; ++i)
            if (rng.uniform() < 0.5)
                theta[i] = -theta[i];
        if (!in_cone(theta, s, u))
            continue;
        samples.emplace_back(ratio_q2(Psi, theta), theta);
    }
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& c) { return a.first < c.first; });
    for (std::size_t i = 0; i < std::min<std::size_t>(samples.size(), 16); ++i)
        starts.push_back(samples[i]);

    double best = std::numeric_limits<double>::infinity();
    for (auto& [r, theta] : starts)
        best = std::min(best, refine_q2(Psi, theta, s, u, rng, 600));
    return std::max(best, kappa1);
}

SparseSingularValues sparse_singular_bounds(const Matrix& Psi, Index m)
{
    const Index K = Psi.rows(), p = Psi.cols();
    if (m < 1)
        throw ParameterError("m must be at least 1");
    // More rows raise sigma_min and sigma_max; fewer columns raise sigma_min
    // and more columns raise sigma_max. So the extremes sit at full size.
    const Index rows = std::min(m, K), cols = std::min(m, p);
    if (choose(K, rows) * choose(p, cols) > kEnumBudget)
        throw BudgetError("sparse singular values: C(K, m) C(p, m) exceeds 1e6 for m = " + std::to_string(m));

    SparseSingularValues out;
    out.sigma_min = std::numeric_limits<double>::infinity();
    Matrix sub(rows, cols);
    auto M = first_combination(cols);
    do {
        double best_min = 0;
        auto J = first_combination(rows);
        do {
            for (Index a = 0; a < rows; ++a)
                for (Index b = 0; b < cols; ++b)
                    sub(a, b) = Psi(J[a], M[b]);
            const Vector sv = Eigen::JacobiSVD<Matrix>(sub).singularValues();
            const double smin = rows >= cols ? sv[sv.size() - 1] : 0.0;
            best_min = std::max(best_min, smin);
            out.sigma_max = std::max(out.sigma_max, sv[0]);
        } while (next_combination(J, K));
        out.sigma_min = std::min(out.sigma_min, best_min);
    } while (next_combination(M, p));
    return out;
}

double kappa_bound_term(const SparseSingularValues& sv, Index m, Index s, double u, int q)
{
    const double md = static_cast<double>(m), sd = static_cast<double>(s);
    const double r = (1 + u) * std::sqrt(sd / md);
    const double lead = sv.sigma_min / std::sqrt(md) - sv.sigma_max / std::sqrt(md) * r;
    return lead * std::pow(sd, 0.5 - 1.0 / q) / ((1 + r) * (1 + u));
}

double kappa_lower_bound(const std::map<Index, SparseSingularValues>& sv, Index s, double u, int q)
{
    if (q != 1 && q != 2)
        throw ParameterError("q must be 1 or 2");
    if (sv.empty())
        throw ParameterError("empty m grid");
    double best = 0;
    for (const auto& [m, v] : sv) {
        if (m < s)
            throw ParameterError("m grid entries must be >= s");
        best = std::max(best, kappa_bound_term(v, m, s, u, q));
    }
    return best;
}

double kappa_lower_bound(const Matrix& Psi, Index s, double u, int q, const std::vector<Index>& m_grid)
{
    if (m_grid.empty())
        throw ParameterError("empty m grid");
    std::map<Index, SparseSingularValues> sv;
    for (Index m : m_grid) {
        if (m < s)
            throw ParameterError("m grid entries must be >= s");
        sv[m] = sparse_singular_bounds(Psi, m);
    }
    return kappa_lower_bound(sv, s, u, q);
}

double weak_iv_kappa_bound(double mu_n, Index s, int q)
{
    if (!(mu_n > 0 && mu_n <= 1))
        throw ParameterError("mu_n must lie in (0, 1]");
    if (s < 1)
        throw ParameterError("s must be at least 1");
    if (q != 1 && q != 2)
        throw ParameterError("q must be 1 or 2");
    return std::pow(static_cast<double>(s), -1.0 / q) * mu_n * mu_n / 128.0;
}

SensitivityReport sensitivity_report(const Matrix& Psi, Index s, double u, int q,
                                     const std::vector<Index>& m_grid)
{
    SensitivityReport r;
    r.q = q;
    r.s = s;
    r.u = u;
    r.m_grid = m_grid;
    for (Index m : m_grid) {
        if (m < s)
            throw ParameterError("m grid entries must be >= s");
        r.sparse[m] = sparse_singular_bounds(Psi, m);
    }
    r.lower_bound = kappa_lower_bound(r.sparse, s, u, q);
    if (Psi.cols() <= 12 && s <= 3) {
        r.exact_kappa = kappa_exact_small(Psi, s, u, q);
        r.exact_label = q == 1 ? "LP-certified" : "upper-bound estimate";
    }
    return r;
}

void to_json(nlohmann::json& j, const SensitivityReport& r)
{
    nlohmann::json smin = nlohmann::json::object(), smax = nlohmann::json::object();
    for (const auto& [m, v] : r.sparse) {
        smin[std::to_string(m)] = v.sigma_min;
        smax[std::to_string(m)] = v.sigma_max;
    }
    j = nlohmann::json{{"q", r.q},
                       {"s", r.s},
                       {"u", r.u},
                       {"lower_bound", r.lower_bound},
                       {"sigma_min_m", smin},
                       {"sigma_max_m", smax},
                       {"m_grid", r.m_grid}};
    if (r.exact_kappa) {
        j["exact_kappa"] = *r.exact_kappa;
        j["exact_label"] = r.exact_label;
    } else {
        j["exact_kappa"] = nullptr;
    }
}

} // namespace endiv
