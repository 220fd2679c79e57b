#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "endiv/dataset.hpp"
#include "endiv/conic_solver.hpp"
#include "endiv/inference.hpp"

namespace endiv::sim {

// Design with L instruments per endogenous regressor:
//   y = x'beta0 + eps,  x_j = xt_j + sum_{k=1..L} z_{L(j-1)+k},  eps = zeta + xt'gamma0,
//   z ~ N(0, I_K),  xt ~ N(0, Sigma) with Sigma_ab = 0.3^{|a-b|},  zeta ~ N(0, zeta_sd^2).
struct DgpParams {
    Index n = 500;
    Index p = 30;
    Index K = 30;
    Index L = 1;
    std::uint64_t seed = 0;
    double zeta_sd = 0.25;
    double gamma_scale = 1.0; // 0 removes the endogeneity channel

    // Throws ParameterError; returns non-fatal warnings.
    std::vector<std::string> check() const;
};

Vector beta0_pattern(Index p);
Vector gamma0_pattern(Index p);
Matrix xtilde_covariance(Index p);
// E[z x'] = Pi, K x p, with unit loadings on contiguous instrument blocks.
Matrix first_stage_loadings(Index p, Index L);

Dataset generate_dgp(const DgpParams& params);

// Population orthogonal instrument for coordinate j: the minimizer of
// E[(x_j - z'mu - x_{-j}'theta)^2] subject to E[x_{-j} z']mu = 0, together with
// Omega_j = E[x_j z'mu] and sigma_j^2 = Omega_j^{-2} E[(xi z'mu)^2].
struct PopulationInstrument {
    Vector mu0;
    Vector theta0;
    double omega = 0;
    double sigma = 0;
};

PopulationInstrument population_instrument(const DgpParams& params, Index j);

// Pipeline settings for one replication.
struct EstimatorConfig {
    double alpha = 0.05;
    double c = 1.1;
    Index draws = 1000;
    std::vector<Index> S{0, 1, 2};
    conic::SolverOptions solver{};
    double lambda_scale = 1.0;
    // Replace estimated nuisances by (beta0, mu0): isolates the linearization.
    bool oracle_nuisance = false;
};

struct ReplicationRecord {
    std::uint64_t seed = 0;
    bool covered = false;            // every beta0_j in the simultaneous band
    std::vector<bool> covered_pointwise;
    double max_width = 0;            // max_j interval width
    double max_abs_error = 0;        // max_j |check_beta_j - beta0_j|
    double critical_value = 0;
    std::vector<double> error;       // check_beta_j - beta0_j
    std::vector<double> sigma_hat;
    std::vector<double> standardized; // sqrt(n)(check_beta_j - beta0_j)/sigma_j (oracle sigma)
    bool stage2_warning = false;
    double max_moment_ratio = 0;     // max_j |moment residual| / moment scale
};

ReplicationRecord run_replication(const DgpParams& params, const EstimatorConfig& cfg,
                                  const std::vector<PopulationInstrument>* oracle = nullptr);

struct MeanSe {
    double mean = 0;
    double se = 0;
};

struct MCSummary {
    DgpParams params;
    EstimatorConfig config;
    Index R = 0;
    Index failures = 0;
    MeanSe rp05;
    MeanSe linf_width;
    MeanSe linf_error;
    std::vector<MeanSe> bias;
    std::vector<MeanSe> pointwise_noncoverage;
    std::vector<ReplicationRecord> records;
};

// Replication r uses DGP seed derive_seed(base_seed, r). Threads only change
// the schedule; the summary is identical for every thread count.
MCSummary monte_carlo(const DgpParams& params, Index R, std::uint64_t base_seed,
                      const EstimatorConfig& cfg = {}, unsigned threads = 1);

void to_json(nlohmann::json& j, const MCSummary& s);

// One line per table row: n p K L rp(.05) linf bias_1 bias_2 bias_3,
// rendered from the JSON form so the table never disagrees with it.
std::string table_header();
std::string table_row(const nlohmann::json& summary);

} // namespace endiv::sim
