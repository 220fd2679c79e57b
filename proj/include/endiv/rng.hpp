#pragma once

#include <cstdint>
#include <random>

#include "endiv/types.hpp"

namespace endiv {

// Mixes (seed, stream) into an independent 64-bit seed. Every random
// quantity in the library is drawn from a generator keyed this way, so a
// draw depends only on its logical position and never on scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    void fill_normal(Eigen::Ref<Vector> out);
    void fill_normal_rows(Eigen::Ref<Matrix> out);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace endiv
