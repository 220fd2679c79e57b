#include "endiv/rng.hpp"

namespace endiv {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

Stream::Stream(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

void Stream::fill_normal(Eigen::Ref<Vector> out)
{
    for (Index i = 0; i < out.size(); ++i)
        out[i] = normal_(engine_);
}

// Row by row, so that the i-th observation only depends on draws i and below.
void Stream::fill_normal_rows(Eigen::Ref<Matrix> out)
{
    for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < out.cols(); ++j)
            out(i, j) = normal_(engine_);
}

} // namespace endiv
