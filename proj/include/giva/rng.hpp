#pragma once

#include <cstdint>
#include <random>

#include "giva/matrix.hpp"

namespace giva {

/// splitmix64 finalizer; used to derive independent stream seeds from
/// (base seed, stream id) pairs so that e.g. epoch shuffles and basis draws
/// never share state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Matrix gaussian_matrix(index_t rows, index_t cols, std::uint64_t seed,
                              double stddev = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = dist(gen);
    }
    return m;
}

/// Kaiming-uniform fill: entries drawn from U(-b, b) with b = sqrt(6 / fan_in).
inline Matrix kaiming_uniform_matrix(index_t rows, index_t cols, index_t fan_in,
                                     std::uint64_t seed) {
    if (fan_in == 0) {
        throw DimensionError("kaiming_uniform_matrix: fan_in must be positive");
    }
    std::mt19937_64 gen(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = dist(gen);
    }
    return m;
}

} // namespace giva
