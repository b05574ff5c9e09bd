#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "cluskin/vec.hpp"

namespace cluskin {

/// Elastic hard-sphere velocity exchange along the contact direction:
///   v'  = v  - omega [omega . (v - v1)]
///   v1' = v1 + omega [omega . (v - v1)]
/// omega points from the particle carrying v towards the one carrying v1, so
/// an incoming configuration has omega . (v - v1) > 0. Momentum and kinetic
/// energy are conserved exactly in exact arithmetic.
template <int Dim>
std::pair<vec<Dim>, vec<Dim>> elastic_collision(const vec<Dim>& v, const vec<Dim>& v1,
                                                const vec<Dim>& omega) {
    const double g = dot(omega, v - v1);
    if (!(g > 0.0)) {
        throw std::invalid_argument("elastic_collision: configuration is not incoming");
    }
    const vec<Dim> impulse = g * omega;
    return {v - impulse, v1 + impulse};
}

/// Earliest forward time at which two freely streaming spheres of the given
/// diameter reach contact. dx is the center displacement (partner minus
/// reference) and dv the corresponding relative velocity, both at time zero.
/// Returns nothing for receding, parallel or missing trajectories, and for
/// grazing contacts whose normal closing speed is below grazing_tol.
template <int Dim>
std::optional<double> predict_contact(const vec<Dim>& dx, const vec<Dim>& dv, double diameter,
                                      double grazing_tol = 1e-12) {
    const double a = norm2(dv);
    if (a == 0.0) return std::nullopt;  // constant separation
    const double b = dot(dx, dv);
    if (b >= 0.0) return std::nullopt;  // receding
    const double c = norm2(dx) - diameter * diameter;
    if (c < 0.0) return std::nullopt;  // already overlapping; caller audits this
    const double disc = b * b - a * c;
    if (disc <= 0.0) return std::nullopt;  // trajectories miss
    const double s = c / (-b + std::sqrt(disc));
    // Normal closing speed at contact; d|r|^2/dt = 2 (b + a s).
    if (std::abs(b + a * s) / diameter < grazing_tol) return std::nullopt;
    return s;
}

}  // namespace cluskin
