#include "endiv/inference.hpp"

#include <algorithm>
#include <cmath>

#include "endiv/normal.hpp"
#include "endiv/rng.hpp"

namespace endiv {

namespace {

double rms(const Vector& v)
{
    return v.size() ? std::sqrt(v.squaredNorm() / static_cast<double>(v.size())) : 0.0;
}

void check_inputs(const Dataset& d, Index j, const Vector& beta_hat, const Vector& mu_hat)
{
    if (j < 0 || j >= d.p())
        throw DimensionError("index " + std::to_string(j) + " outside [0, " + std::to_string(d.p()) + ")");
    if (beta_hat.size() != d.p())
        throw DimensionError("beta_hat has wrong length");
    if (mu_hat.size() != d.K())
        throw DimensionError("mu_hat has wrong length");
}

void relevance_guard(const Dataset& d, Index j, const Vector& zmu, double omega)
{
    if (!(std::abs(omega) > 1e-8 * rms(d.X.col(j)) * rms(zmu)))
        throw WeakInstrumentError("weak constructed instrument for coordinate " +
                                  std::to_string(j + 1) + ": |Omega_hat| = " +
                                  std::to_string(std::abs(omega)));
}

} // namespace

DebiasedEstimate debiased_coefficient(const Dataset& d, Index j, const Vector& beta_hat,
                                      const Vector& mu_hat)
{
    check_inputs(d, j, beta_hat, mu_hat);
    const double n = static_cast<double>(d.n());
    const Vector zmu = d.Z * mu_hat;
    DebiasedEstimate e;
    e.j = j;
    e.omega_hat = d.X.col(j).dot(zmu) / n;
    relevance_guard(d, j, zmu, e.omega_hat);

    Vector partial = d.y - d.X * beta_hat;
    partial += d.X.col(j) * beta_hat[j];
    e.beta_check = partial.dot(zmu) / n / e.omega_hat;

    const Vector resid = partial - d.X.col(j) * e.beta_check;
    e.moment_residual = resid.dot(zmu) / n;
    e.moment_scale = std::abs(e.omega_hat) * rms(d.y);
    return e;
}

double variance_estimate(const Dataset& d, Index j, const Vector& beta_hat, const Vector& mu_hat,
                         double omega_hat)
{
    check_inputs(d, j, beta_hat, mu_hat);
    const Vector zmu = d.Z * mu_hat;
    relevance_guard(d, j, zmu, omega_hat);
    const Vector score = (d.y - d.X * beta_hat).cwiseProduct(zmu);
    return std::sqrt(score.squaredNorm() / static_cast<double>(d.n())) / std::abs(omega_hat);
}

Matrix bootstrap_scores(const Dataset& d, const Vector& beta_hat, const std::vector<Vector>& mu_hats,
                        const std::vector<DebiasedEstimate>& estimates)
{
    if (mu_hats.size() != estimates.size())
        throw DimensionError("one instrument per estimate is required");
    const Vector resid = d.y - d.X * beta_hat;
    Matrix scores(d.n(), static_cast<Index>(estimates.size()));
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        const auto& e = estimates[k];
        const double denom = e.sigma_hat * e.omega_hat;
        if (denom == 0.0)
            scores.col(k).setZero();
        else
            scores.col(k) = resid.cwiseProduct(d.Z * mu_hats[k]) / denom;
    }
    return scores;
}

std::vector<double> bootstrap_max_statistics(const Matrix& scores, Index B, std::uint64_t seed)
{
    if (B < 1)
        throw ParameterError("bootstrap needs at least one draw");
    const Index n = scores.rows();
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> stats(static_cast<std::size_t>(B));
    Vector g(n);
    for (Index b = 0; b < B; ++b) {
        Stream rng(seed, static_cast<std::uint64_t>(b));
        rng.fill_normal(g);
        // One dot product per column, so a coordinate's statistic does not
        // depend on which other coordinates are in S.
        double best = 0.0;
        for (Index j = 0; j < scores.cols(); ++j)
            best = std::max(best, std::abs(-inv_sqrt_n * scores.col(j).dot(g)));
        stats[static_cast<std::size_t>(b)] = best;
    }
    return stats;
}

double bootstrap_quantile(std::vector<double> stats, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0, 1)");
    if (stats.empty())
        throw ParameterError("no bootstrap statistics");
    const auto B = static_cast<double>(stats.size());
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * B - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, stats.size());
    std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(rank - 1), stats.end());
    return stats[rank - 1];
}

double multiplier_bootstrap(const Matrix& scores, double alpha, Index B, std::uint64_t seed)
{
    if (B < 100)
        throw ParameterError("multiplier bootstrap needs B >= 100");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0, 1)");
    if (scores.cols() == 0)
        throw ParameterError("empty index set");
    if (scores.cwiseAbs().maxCoeff() == 0.0)
        throw EstimationError("zero score variance");
    return bootstrap_quantile(bootstrap_max_statistics(scores, B, seed), alpha);
}

double multiplier_bootstrap(const Dataset& d, const Vector& beta_hat,
                            const std::vector<Vector>& mu_hats,
                            const std::vector<DebiasedEstimate>& estimates, double alpha, Index B,
                            std::uint64_t seed)
{
    return multiplier_bootstrap(bootstrap_scores(d, beta_hat, mu_hats, estimates), alpha, B, seed);
}

ConfidenceBand simultaneous_bands(const std::vector<DebiasedEstimate>& estimates, double c_star,
                                  Index n, double alpha)
{
    if (!(c_star >= 0.0))
        throw ParameterError("critical value must be nonnegative");
    ConfidenceBand band;
    band.alpha = alpha;
    band.critical_value = c_star;
    const double root_n = std::sqrt(static_cast<double>(n));
    for (const auto& e : estimates) {
        band.S.push_back(e.j);
        const double half = c_star * e.sigma_hat / root_n;
        band.intervals.push_back({e.j, e.beta_check, e.sigma_hat, {e.beta_check - half, e.beta_check + half}});
        if (e.sigma_hat == 0.0)
            band.warnings.push_back("zero-width interval for coordinate " + std::to_string(e.j + 1) +
                                    " (sigma_hat = 0)");
    }
    return band;
}

Interval pointwise_interval(const DebiasedEstimate& e, Index n, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0, 1)");
    const double half = normal_quantile(1.0 - alpha / 2.0) * e.sigma_hat / std::sqrt(static_cast<double>(n));
    return {e.beta_check - half, e.beta_check + half};
}

void to_json(nlohmann::json& j, const ConfidenceBand& band)
{
    nlohmann::json S = nlohmann::json::array();
    for (Index k : band.S)
        S.push_back(k + 1);
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : band.intervals)
        intervals.push_back({{"j", iv.j + 1},
                             {"lo", iv.interval.lo},
                             {"hi", iv.interval.hi},
                             {"beta_check", iv.beta_check},
                             {"sigma_hat", iv.sigma_hat}});
    j = nlohmann::json{{"S", S},
                       {"alpha", band.alpha},
                       {"critical_value", band.critical_value},
                       {"intervals", intervals},
                       {"B", band.B},
                       {"seed", band.seed}};
    if (!band.warnings.empty())
        j["warnings"] = band.warnings;
}

} // namespace endiv
