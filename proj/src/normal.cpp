#include "endiv/normal.hpp"

#include <boost/math/distributions/normal.hpp>

#include "endiv/types.hpp"

namespace endiv {

double normal_cdf(double x)
{
    return boost::math::cdf(boost::math::normal_distribution<double>{}, x);
}

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0))
        throw ParameterError("normal_quantile: probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

} // namespace endiv
