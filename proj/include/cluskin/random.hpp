#pragma once

#include <cstdint>
#include <random>

#include "cluskin/vec.hpp"

namespace cluskin {

using rng_engine = std::mt19937_64;

/// SplitMix64 finalizer, used to decorrelate seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for replica `replica` of an ensemble with the given master seed.
/// Replica r gets splitmix64(master + (r+1) * golden ratio increment), so
/// replica streams are decorrelated but fully reproducible from the master.
constexpr std::uint64_t replica_seed(std::uint64_t master_seed, int replica) {
    return splitmix64(master_seed +
                      0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(replica + 1));
}

/// Isotropic Gaussian vector with per-component standard deviation sigma.
template <int Dim>
vec<Dim> gaussian_vector(rng_engine& rng, double sigma) {
    std::normal_distribution<double> normal(0.0, sigma);
    vec<Dim> v;
    for (int d = 0; d < Dim; ++d) v[d] = normal(rng);
    return v;
}

/// Uniform direction on the unit sphere S^{Dim-1}.
template <int Dim>
vec<Dim> random_unit_vector(rng_engine& rng) {
    if constexpr (Dim == 2) {
        std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
        const double a = angle(rng);
        return {{std::cos(a), std::sin(a)}};
    } else {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const double z = 2.0 * u01(rng) - 1.0;
        const double phi = 2.0 * 3.14159265358979323846 * u01(rng);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {{r * std::cos(phi), r * std::sin(phi), z}};
    }
}

}  // namespace cluskin
