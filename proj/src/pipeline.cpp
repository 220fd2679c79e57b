#include "endiv/pipeline.hpp"

#include <cmath>

namespace endiv {

namespace {

void scale_lambda(PenaltyConfig& pen, double lambda_scale)
{
    if (!(lambda_scale > 0) || !std::isfinite(lambda_scale))
        throw ParameterError("lambda scale must be positive and finite");
    pen.lambda_t *= lambda_scale;
}

} // namespace

Stage1Fit estimate_beta(const Dataset& d, double alpha, const conic::SolverOptions& solver,
                        double lambda_scale)
{
    require_valid(d);
    auto pen = default_penalties_stage1(d.n(), d.p(), alpha, compute_H1n(d));
    scale_lambda(pen, lambda_scale);
    return fit_beta(d, pen, solver);
}

std::vector<OrthogonalInstrumentFit> estimate_instruments(const Dataset& d, const std::vector<Index>& S,
                                                          double alpha, double c,
                                                          const conic::SolverOptions& solver,
                                                          double lambda_scale)
{
    require_valid(d);
    if (S.empty())
        throw ParameterError("index set S is empty");
    const double h = compute_H2n(d);
    auto pen = default_penalties_stage2(d.n(), d.p(), d.K(), static_cast<Index>(S.size()), alpha, h, c);
    scale_lambda(pen, lambda_scale);
    std::vector<OrthogonalInstrumentFit> fits;
    fits.reserve(S.size());
    for (Index j : S)
        fits.push_back(fit_instrument(d, j, pen, solver));
    return fits;
}

InferenceResult estimate_and_band(const Dataset& d, const std::vector<Index>& S,
                                  const PipelineOptions& opts)
{
    InferenceResult res;
    res.stage1 = estimate_beta(d, opts.alpha, opts.solver, opts.lambda_scale);
    res.instruments = estimate_instruments(d, S, opts.alpha, opts.c, opts.solver, opts.lambda_scale);

    std::vector<Vector> mus;
    for (const auto& fit : res.instruments) {
        auto e = debiased_coefficient(d, fit.j, res.stage1.beta_hat, fit.mu_hat);
        e.sigma_hat = variance_estimate(d, fit.j, res.stage1.beta_hat, fit.mu_hat, e.omega_hat);
        res.estimates.push_back(e);
        mus.push_back(fit.mu_hat);
    }
    const double c_star = multiplier_bootstrap(d, res.stage1.beta_hat, mus, res.estimates, opts.alpha,
                                               opts.draws, opts.seed);
    res.band = simultaneous_bands(res.estimates, c_star, d.n(), opts.alpha);
    res.band.B = opts.draws;
    res.band.seed = opts.seed;
    for (const auto& fit : res.instruments)
        if (fit.warning)
            res.band.warnings.push_back("stage-2 fit for coordinate " + std::to_string(fit.j + 1) +
                                        " stopped at the iteration cap");
    return res;
}

} // namespace endiv
