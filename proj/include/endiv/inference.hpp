#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "endiv/dataset.hpp"

namespace endiv {

struct DebiasedEstimate {
    Index j = 0;
    double beta_check = 0;
    double omega_hat = 0;
    double sigma_hat = 0;
    // E_n[(y - x_j beta_check - x_{-j}'beta_hat_{-j}) z'mu]: zero up to rounding.
    double moment_residual = 0;
    // Scale that moment_residual is compared against: |omega_hat| * RMS(y).
    double moment_scale = 0;
};

// Closed-form solution of the orthogonalized moment equation
//   beta_check_j = Omega_j^{-1} E_n[(y - sum_{k != j} x_k beta_hat_k) z'mu],
//   Omega_j = E_n[x_j z'mu].
// Throws WeakInstrumentError when |Omega_j| <= 1e-8 RMS(x_j) RMS(z'mu).
DebiasedEstimate debiased_coefficient(const Dataset& d, Index j, const Vector& beta_hat,
                                      const Vector& mu_hat);

// sigma_j^2 = Omega_j^{-2} E_n[{(y - x'beta_hat) z'mu}^2], with the full beta_hat.
double variance_estimate(const Dataset& d, Index j, const Vector& beta_hat, const Vector& mu_hat,
                         double omega_hat);

// Normalized scores sigma_j^{-1} Omega_j^{-1} (y_i - x_i'beta_hat) z_i'mu^j, one column per j.
Matrix bootstrap_scores(const Dataset& d, const Vector& beta_hat, const std::vector<Vector>& mu_hats,
                        const std::vector<DebiasedEstimate>& estimates);

// max_j |G_j| for each draw b, G = -n^{-1/2} sum_i g_i scores_i with the
// multipliers of draw b taken from the stream (seed, b).
std::vector<double> bootstrap_max_statistics(const Matrix& scores, Index B, std::uint64_t seed);

// Order statistic of rank ceil((1 - alpha) B) (1-based) of the statistics.
double bootstrap_quantile(std::vector<double> stats, double alpha);

// Critical value c*_{alpha,S}. Throws EstimationError on all-zero scores.
double multiplier_bootstrap(const Matrix& scores, double alpha, Index B, std::uint64_t seed);

double multiplier_bootstrap(const Dataset& d, const Vector& beta_hat,
                            const std::vector<Vector>& mu_hats,
                            const std::vector<DebiasedEstimate>& estimates, double alpha, Index B,
                            std::uint64_t seed);

struct Interval {
    double lo = 0;
    double hi = 0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct BandInterval {
    Index j = 0;
    double beta_check = 0;
    double sigma_hat = 0;
    Interval interval;
};

struct ConfidenceBand {
    std::vector<Index> S;
    double alpha = 0.05;
    double critical_value = 0;
    std::vector<BandInterval> intervals;
    Index B = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// beta_check_j -/+ c* sigma_j / sqrt(n) for every estimate.
ConfidenceBand simultaneous_bands(const std::vector<DebiasedEstimate>& estimates, double c_star,
                                  Index n, double alpha);

// beta_check_j -/+ Phi^{-1}(1 - alpha/2) sigma_j / sqrt(n).
Interval pointwise_interval(const DebiasedEstimate& e, Index n, double alpha);

// JSON uses 1-based coordinate labels.
void to_json(nlohmann::json& j, const ConfidenceBand& band);

} // namespace endiv
