#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "endiv/types.hpp"

namespace endiv {

// Dense tableau simplex for  max c'x  s.t.  A x <= b, x >= 0  with b >= 0,
// so the origin is a feasible basis. Bland's rule, no cycling.
struct LpResult {
    bool unbounded = false;
    double value = 0;
    Vector x;
};

LpResult simplex_max(const Matrix& A, const Vector& b, const Vector& c);

// kappa_q(s, u) = min over |J| <= s and theta in C_J(u) with ||theta||_q = 1
// of ||Psi theta||_inf, where C_J(u) = {||theta_{J^c}||_1 <= u ||theta_J||_1}.
// q = 1 is certified by one LP per (J, sign pattern). q = 2 is an upper-bound
// estimate from sampling and local descent seeded by the LP solutions.
// Requires p <= 12 and s <= 3, otherwise BudgetError.
double kappa_exact_small(const Matrix& Psi, Index s, double u, int q, std::uint64_t seed = 0);

struct SparseSingularValues {
    double sigma_min = 0; // min_{|M|<=m} max_{|J|<=m} sigma_min(Psi_{J,M})
    double sigma_max = 0; // max_{|M|<=m} max_{|J|<=m} sigma_max(Psi_{J,M})
};

// Exact by enumeration; BudgetError when C(K, m) C(p, m) > 1e6 for the
// subset sizes that matter. sigma_min of a wide submatrix is 0.
SparseSingularValues sparse_singular_bounds(const Matrix& Psi, Index m);

// Lower bound on kappa_q(s, u) maximized over m in m_grid (entries >= s),
// clipped at 0.
double kappa_lower_bound(const Matrix& Psi, Index s, double u, int q, const std::vector<Index>& m_grid);

// Same expression from precomputed sparse singular values.
double kappa_lower_bound(const std::map<Index, SparseSingularValues>& sv, Index s, double u, int q);

// Single-m term of the bound, before the max and the clipping.
double kappa_bound_term(const SparseSingularValues& sv, Index m, Index s, double u, int q);

// s^{-1/q} mu_n^2 / 128 for mu_n in (0, 1].
double weak_iv_kappa_bound(double mu_n, Index s, int q);

struct SensitivityReport {
    int q = 1;
    Index s = 1;
    double u = 3;
    std::optional<double> exact_kappa;
    std::string exact_label; // "LP-certified" or "upper-bound estimate"
    double lower_bound = 0;
    std::map<Index, SparseSingularValues> sparse;
    std::vector<Index> m_grid;
};

// Psi = E_n[z x'] from data is the caller's business. The exact value is
// attempted only within its budget.
SensitivityReport sensitivity_report(const Matrix& Psi, Index s, double u, int q,
                                     const std::vector<Index>& m_grid);

void to_json(nlohmann::json& j, const SensitivityReport& r);

} // namespace endiv
