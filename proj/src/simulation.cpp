#include "endiv/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "endiv/pipeline.hpp"
#include "endiv/rng.hpp"

namespace endiv::sim {

std::vector<std::string> DgpParams::check() const
{
    if (n < 2 || p < 1 || L < 1)
        throw ParameterError("DGP needs n >= 2, p >= 1 and L >= 1");
    if (K != L * p)
        throw ParameterError("DGP needs K = L p (got K = " + std::to_string(K) + ", L p = " +
                             std::to_string(L * p) + ")");
    if (!(zeta_sd >= 0.0) || !(gamma_scale >= 0.0))
        throw ParameterError("DGP noise scales must be nonnegative");
    std::vector<std::string> warnings;
    if (p < 10)
        warnings.push_back("p < 10: gamma0 truncated to its first " + std::to_string(p) + " entries");
    return warnings;
}

Vector beta0_pattern(Index p)
{
    Vector b = Vector::Zero(p);
    const double head[] = {1.0, 0.8, 0.6, 0.4, 0.2};
    for (Index k = 0; k < std::min<Index>(p, 5); ++k)
        b[k] = head[k];
    return b;
}

Vector gamma0_pattern(Index p)
{
    Vector g = Vector::Zero(p);
    for (Index k = 0; k < std::min<Index>(p, 10); ++k)
        g[k] = 0.1 * static_cast<double>(k + 1);
    return g;
}

Matrix xtilde_covariance(Index p)
{
    Matrix S(p, p);
    for (Index a = 0; a < p; ++a)
        for (Index b = 0; b < p; ++b)
            S(a, b) = std::pow(0.3, static_cast<double>(std::abs(a - b)));
    return S;
}

Matrix first_stage_loadings(Index p, Index L)
{
    Matrix Pi = Matrix::Zero(L * p, p);
    for (Index j = 0; j < p; ++j)
        Pi.block(L * j, j, L, 1).setOnes();
    return Pi;
}

Dataset generate_dgp(const DgpParams& params)
{
    params.check();
    const Index n = params.n, p = params.p, K = params.K;

    Dataset d;
    d.Z.resize(n, K);
    Stream(params.seed, 1).fill_normal_rows(d.Z);

    Matrix E(n, p);
    Stream(params.seed, 2).fill_normal_rows(E);
    const Matrix chol = Eigen::LLT<Matrix>(xtilde_covariance(p)).matrixL();
    const Matrix xt = E * chol.transpose();

    Vector zeta(n);
    Stream(params.seed, 3).fill_normal(zeta);
    zeta *= params.zeta_sd;

    d.X = xt + d.Z * first_stage_loadings(p, params.L);

    GroundTruth truth;
    truth.beta0 = beta0_pattern(p);
    truth.xi = zeta + params.gamma_scale * (xt * gamma0_pattern(p));
    d.y = d.X * truth.beta0 + truth.xi;
    d.truth = std::move(truth);
    return d;
}

PopulationInstrument population_instrument(const DgpParams& params, Index j)
{
    params.check();
    const Index p = params.p, K = params.K;
    if (j < 0 || j >= p)
        throw DimensionError("target index outside [0, p)");
    const Matrix Sigma = xtilde_covariance(p);
    const Matrix Pi = first_stage_loadings(p, params.L);
    const Matrix Exx = Sigma + Pi.transpose() * Pi;

    std::vector<Index> rest;
    for (Index k = 0; k < p; ++k)
        if (k != j)
            rest.push_back(k);
    const Index m = p - 1;
    Matrix Pi_rest(K, m), Exx_rest(m, m);
    Vector exx_j(m);
    for (Index a = 0; a < m; ++a) {
        Pi_rest.col(a) = Pi.col(rest[a]);
        exx_j[a] = Exx(rest[a], j);
        for (Index b = 0; b < m; ++b)
            Exx_rest(a, b) = Exx(rest[a], rest[b]);
    }

    // KKT system of the equality-constrained least squares problem in (mu, theta).
    const Index nv = K + m;
    Matrix kkt = Matrix::Zero(nv + m, nv + m);
    kkt.topLeftCorner(K, K).setIdentity();
    kkt.block(0, K, K, m) = Pi_rest;
    kkt.block(K, 0, m, K) = Pi_rest.transpose();
    kkt.block(K, K, m, m) = Exx_rest;
    kkt.block(nv, 0, m, K) = Pi_rest.transpose();
    kkt.block(0, nv, K, m) = Pi_rest;
    Vector rhs = Vector::Zero(nv + m);
    rhs.head(K) = Pi.col(j);
    rhs.segment(K, m) = exx_j;
    const Vector sol = kkt.fullPivLu().solve(rhs);

    PopulationInstrument out;
    out.mu0 = sol.head(K);
    out.theta0 = sol.segment(K, m);
    out.omega = Pi.col(j).dot(out.mu0);
    const Vector g = params.gamma_scale * gamma0_pattern(p);
    const double var_xi = params.zeta_sd * params.zeta_sd + g.dot(Sigma * g);
    out.sigma = std::sqrt(var_xi) * out.mu0.norm() / std::abs(out.omega);
    return out;
}

ReplicationRecord run_replication(const DgpParams& params, const EstimatorConfig& cfg,
                                  const std::vector<PopulationInstrument>* oracle)
{
    const Dataset d = generate_dgp(params);
    const auto& beta0 = d.truth->beta0;

    Vector beta_hat;
    std::vector<Vector> mus;
    ReplicationRecord rec;
    rec.seed = params.seed;
    if (cfg.oracle_nuisance) {
        if (!oracle || oracle->size() != cfg.S.size())
            throw ParameterError("oracle replication needs one population instrument per index");
        beta_hat = beta0;
        for (const auto& o : *oracle)
            mus.push_back(o.mu0);
    } else {
        beta_hat = estimate_beta(d, cfg.alpha, cfg.solver, cfg.lambda_scale).beta_hat;
        for (auto& fit : estimate_instruments(d, cfg.S, cfg.alpha, cfg.c, cfg.solver, cfg.lambda_scale)) {
            rec.stage2_warning = rec.stage2_warning || fit.warning;
            mus.push_back(std::move(fit.mu_hat));
        }
    }

    std::vector<DebiasedEstimate> estimates;
    for (std::size_t k = 0; k < cfg.S.size(); ++k) {
        auto e = debiased_coefficient(d, cfg.S[k], beta_hat, mus[k]);
        e.sigma_hat = variance_estimate(d, cfg.S[k], beta_hat, mus[k], e.omega_hat);
        estimates.push_back(e);
    }
    rec.critical_value = multiplier_bootstrap(d, beta_hat, mus, estimates, cfg.alpha, cfg.draws,
                                              derive_seed(params.seed, 0xb00757a9ULL));
    const auto band = simultaneous_bands(estimates, rec.critical_value, d.n(), cfg.alpha);

    rec.covered = true;
    const double root_n = std::sqrt(static_cast<double>(d.n()));
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        const Index j = cfg.S[k];
        const auto& iv = band.intervals[k].interval;
        const double err = estimates[k].beta_check - beta0[j];
        rec.covered = rec.covered && iv.contains(beta0[j]);
        rec.covered_pointwise.push_back(pointwise_interval(estimates[k], d.n(), cfg.alpha).contains(beta0[j]));
        rec.max_width = std::max(rec.max_width, iv.width());
        rec.max_abs_error = std::max(rec.max_abs_error, std::abs(err));
        rec.error.push_back(err);
        rec.sigma_hat.push_back(estimates[k].sigma_hat);
        if (estimates[k].moment_scale > 0)
            rec.max_moment_ratio = std::max(rec.max_moment_ratio,
                                            std::abs(estimates[k].moment_residual) / estimates[k].moment_scale);
        const double sigma = oracle ? (*oracle)[k].sigma : estimates[k].sigma_hat;
        rec.standardized.push_back(root_n * err / sigma);
    }
    return rec;
}

namespace {

MeanSe mean_se(const std::vector<double>& v)
{
    MeanSe out;
    if (v.empty())
        return out;
    double s = 0;
    for (double x : v)
        s += x;
    out.mean = s / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v)
            ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return out;
}

} // namespace

MCSummary monte_carlo(const DgpParams& params, Index R, std::uint64_t base_seed,
                      const EstimatorConfig& cfg, unsigned threads)
{
    if (R < 1)
        throw ParameterError("monte_carlo needs R >= 1");
    params.check();
    for (Index j : cfg.S)
        if (j < 0 || j >= params.p)
            throw ParameterError("index set entry outside [0, p)");

    std::vector<PopulationInstrument> oracle;
    if (cfg.oracle_nuisance)
        for (Index j : cfg.S)
            oracle.push_back(population_instrument(params, j));

    std::vector<std::optional<ReplicationRecord>> slots(static_cast<std::size_t>(R));
    std::vector<std::string> errors(static_cast<std::size_t>(R));
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index r = next++; r < R; r = next++) {
            DgpParams pr = params;
            pr.seed = derive_seed(base_seed, static_cast<std::uint64_t>(r));
            try {
                slots[static_cast<std::size_t>(r)] =
                    run_replication(pr, cfg, cfg.oracle_nuisance ? &oracle : nullptr);
            } catch (const std::exception& ex) {
                errors[static_cast<std::size_t>(r)] = "replication " + std::to_string(r) + " (seed " +
                                                      std::to_string(pr.seed) + "): " + ex.what();
            }
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(R)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    MCSummary s;
    s.params = params;
    s.params.seed = base_seed;
    s.config = cfg;
    s.R = R;
    std::string first_errors;
    for (std::size_t r = 0; r < slots.size(); ++r) {
        if (slots[r]) {
            s.records.push_back(std::move(*slots[r]));
        } else {
            ++s.failures;
            if (s.failures <= 5)
                first_errors += "\n  " + errors[r];
        }
    }
    if (20 * s.failures > R)
        throw EstimationError("Monte Carlo aborted: " + std::to_string(s.failures) + " of " +
                              std::to_string(R) + " replications failed:" + first_errors);

    const std::size_t m = cfg.S.size();
    std::vector<double> rej, width, linf;
    std::vector<std::vector<double>> err(m), pw(m);
    for (const auto& rec : s.records) {
        rej.push_back(rec.covered ? 0.0 : 1.0);
        width.push_back(rec.max_width);
        linf.push_back(rec.max_abs_error);
        for (std::size_t k = 0; k < m; ++k) {
            err[k].push_back(rec.error[k]);
            pw[k].push_back(rec.covered_pointwise[k] ? 0.0 : 1.0);
        }
    }
    s.rp05 = mean_se(rej);
    s.linf_width = mean_se(width);
    s.linf_error = mean_se(linf);
    for (std::size_t k = 0; k < m; ++k) {
        s.bias.push_back(mean_se(err[k]));
        s.pointwise_noncoverage.push_back(mean_se(pw[k]));
    }
    return s;
}

void to_json(nlohmann::json& j, const MCSummary& s)
{
    auto ms = [](const MeanSe& m) { return nlohmann::json{{"mean", m.mean}, {"se", m.se}}; };
    nlohmann::json bias = nlohmann::json::array(), pw = nlohmann::json::array(), S = nlohmann::json::array();
    for (std::size_t k = 0; k < s.bias.size(); ++k) {
        S.push_back(s.config.S[k] + 1);
        bias.push_back(ms(s.bias[k]));
        pw.push_back(ms(s.pointwise_noncoverage[k]));
    }
    j = nlohmann::json{
        {"params", {{"n", s.params.n}, {"p", s.params.p}, {"K", s.params.K}, {"L", s.params.L},
                    {"seed", s.params.seed}}},
        {"S", S},
        {"alpha", s.config.alpha},
        {"c", s.config.c},
        {"lambda_scale", s.config.lambda_scale},
        {"oracle_nuisance", s.config.oracle_nuisance},
        {"B", s.config.draws},
        {"R", s.R},
        {"failures", s.failures},
        {"rp05", ms(s.rp05)},
        {"linf_width", ms(s.linf_width)},
        {"linf_error", ms(s.linf_error)},
        {"bias", bias},
        {"pointwise_noncoverage", pw},
        {"stage2_warnings", std::count_if(s.records.begin(), s.records.end(),
                                          [](const auto& r) { return r.stage2_warning; })},
    };
}

std::string table_header()
{
    return "    n     p     K   L   rp(.05)   l_inf     bias_1    bias_2    bias_3";
}

std::string table_row(const nlohmann::json& summary)
{
    const auto& pr = summary.at("params");
    const auto& bias = summary.at("bias");
    auto b = [&](std::size_t k) { return k < bias.size() ? bias[k].at("mean").get<double>() : 0.0; };
    char buf[256];
    std::snprintf(buf, sizeof buf, "%5ld %5ld %5ld %3ld   %6.3f  %7.4f  %8.4f  %8.4f  %8.4f",
                  pr.at("n").get<long>(), pr.at("p").get<long>(), pr.at("K").get<long>(),
                  pr.at("L").get<long>(), summary.at("rp05").at("mean").get<double>(),
                  summary.at("linf_width").at("mean").get<double>(), b(0), b(1), b(2));
    return buf;
}

} // namespace endiv::sim
