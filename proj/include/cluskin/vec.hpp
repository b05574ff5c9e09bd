#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace cluskin {

/// Fixed-dimension Cartesian vector used for positions, velocities and
/// scattering directions.
template <int Dim>
struct vec {
    static_assert(Dim == 2 || Dim == 3, "simulations run in 2 or 3 dimensions");

    std::array<double, Dim> c{};

    double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    vec& operator+=(const vec& o) {
        for (int d = 0; d < Dim; ++d) c[d] += o.c[d];
        return *this;
    }
    vec& operator-=(const vec& o) {
        for (int d = 0; d < Dim; ++d) c[d] -= o.c[d];
        return *this;
    }
    vec& operator*=(double s) {
        for (int d = 0; d < Dim; ++d) c[d] *= s;
        return *this;
    }

    friend vec operator+(vec a, const vec& b) { return a += b; }
    friend vec operator-(vec a, const vec& b) { return a -= b; }
    friend vec operator*(double s, vec a) { return a *= s; }
    friend vec operator*(vec a, double s) { return a *= s; }
    friend vec operator-(vec a) { return a *= -1.0; }
    friend bool operator==(const vec& a, const vec& b) = default;
};

template <int Dim>
double dot(const vec<Dim>& a, const vec<Dim>& b) {
    double s = 0;
    for (int d = 0; d < Dim; ++d) s += a[d] * b[d];
    return s;
}

template <int Dim>
double norm2(const vec<Dim>& a) {
    return dot(a, a);
}

template <int Dim>
double norm(const vec<Dim>& a) {
    return std::sqrt(norm2(a));
}

}  // namespace cluskin
