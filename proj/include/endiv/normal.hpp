#pragma once

namespace endiv {

// Standard normal distribution function.
double normal_cdf(double x);

// Standard normal quantile; p must lie in (0, 1).
double normal_quantile(double p);

} // namespace endiv
