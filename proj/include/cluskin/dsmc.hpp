#pragma once

// Stochastic particle realization of the homogeneous Maxwell-molecule model:
// the collision rate is velocity-independent, so pair events occur at total
// rate N/2 between uniformly random pairs and every particle collides at
// unit rate in kinetic time. Cluster statistics depend only on the event
// log; velocities are optional and exist for kinematic diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cluskin/collision.hpp"
#include "cluskin/collision_log.hpp"
#include "cluskin/random.hpp"
#include "cluskin/vec.hpp"

namespace cluskin::dsmc {

/// Scattering density g(cos theta) on the hemisphere cos theta > 0, where
/// cos theta is measured against the relative velocity. The isotropic law is
/// the constant density; a tabulated law is linearly interpolated on its
/// knots and sampled by rejection, so only its shape matters.
struct scattering_law {
    enum class kind { isotropic_hemisphere, tabulated };

    kind type = kind::isotropic_hemisphere;
    std::vector<double> cos_nodes;  // ascending knots in [0, 1]
    std::vector<double> density;    // g at the knots, nonnegative

    static scattering_law isotropic() { return {}; }
    static scattering_law from_table(std::vector<double> nodes, std::vector<double> values) {
        if (nodes.size() != values.size() || nodes.size() < 2) {
            throw std::invalid_argument("scattering table needs matching nodes and values");
        }
        if (!std::is_sorted(nodes.begin(), nodes.end())) {
            throw std::invalid_argument("scattering table nodes must be ascending");
        }
        for (double v : values) {
            if (!(v >= 0.0)) throw std::invalid_argument("scattering density must be nonnegative");
        }
        scattering_law law;
        law.type = kind::tabulated;
        law.cos_nodes = std::move(nodes);
        law.density = std::move(values);
        return law;
    }

    double evaluate(double c) const {
        if (cos_nodes.empty()) return 1.0;
        if (c <= cos_nodes.front()) return density.front();
        if (c >= cos_nodes.back()) return density.back();
        const auto it = std::upper_bound(cos_nodes.begin(), cos_nodes.end(), c);
        const std::size_t hi = static_cast<std::size_t>(it - cos_nodes.begin());
        const double x0 = cos_nodes[hi - 1], x1 = cos_nodes[hi];
        const double w = (c - x0) / (x1 - x0);
        return (1.0 - w) * density[hi - 1] + w * density[hi];
    }

    double max_density() const {
        if (density.empty()) return 1.0;
        return *std::max_element(density.begin(), density.end());
    }
};

/// Direction omega distributed with density g(cos theta) on the hemisphere
/// (v_rel . omega) > 0. The isotropic law in three dimensions makes
/// cos theta uniform on (0, 1).
template <int Dim>
vec<Dim> sample_scattering(rng_engine& rng, const vec<Dim>& vrel, const scattering_law& law) {
    const double speed = norm(vrel);
    if (!(speed > 0.0)) throw std::invalid_argument("zero relative velocity");
    const vec<Dim> u = (1.0 / speed) * vrel;

    const double gmax = law.max_density();
    for (int attempt = 0; attempt < 1'000'000; ++attempt) {
        vec<Dim> omega = random_unit_vector<Dim>(rng);
        double c = dot(omega, u);
        if (c == 0.0) continue;  // measure-zero tie: resample
        if (c < 0.0) {
            omega = -omega;  // fold onto the support hemisphere
            c = -c;
        }
        if (law.type == scattering_law::kind::isotropic_hemisphere) return omega;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (u01(rng) * gmax <= law.evaluate(c)) return omega;
    }
    throw std::runtime_error("scattering rejection sampling failed; degenerate table");
}

struct config {
    std::int64_t n = 0;
    std::uint64_t seed = 0;
    double t_end = 0.0;
    scattering_law scattering{};
    bool track_velocities = false;
    double temperature = 1.0;  // initial Maxwellian when velocities are tracked
};

template <int Dim = 3>
class simulation {
public:
    explicit simulation(const config& cfg) : cfg_(cfg), rng_(cfg.seed) {
        if (cfg_.n < 2) throw std::invalid_argument("need at least two particles");
        if (!(cfg_.t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
        counts_.assign(static_cast<std::size_t>(cfg_.n), 0);
        if (cfg_.track_velocities) {
            vel_.resize(static_cast<std::size_t>(cfg_.n));
            const double sigma = std::sqrt(cfg_.temperature);
            for (auto& v : vel_) v = gaussian_vector<Dim>(rng_, sigma);
        }
    }

    void run() {
        std::exponential_distribution<double> waiting(static_cast<double>(cfg_.n) / 2.0);
        std::uniform_int_distribution<std::int64_t> pick(0, cfg_.n - 1);
        while (true) {
            const double dt = waiting(rng_);
            if (now_ + dt > cfg_.t_end) {
                now_ = cfg_.t_end;
                return;
            }
            now_ += dt;

            std::int64_t i = 0, j = 0;
            log_event rec;
            while (true) {
                i = pick(rng_);
                do { j = pick(rng_); } while (j == i);
                if (!cfg_.track_velocities) break;
                const vec<Dim> vrel =
                    vel_[static_cast<std::size_t>(i)] - vel_[static_cast<std::size_t>(j)];
                if (!(norm2(vrel) > 0.0)) continue;  // exact tie: resample the pair
                const vec<Dim> omega = sample_scattering<Dim>(rng_, vrel, cfg_.scattering);
                auto [vi, vj] = elastic_collision(vel_[static_cast<std::size_t>(i)],
                                                  vel_[static_cast<std::size_t>(j)], omega);
                vel_[static_cast<std::size_t>(i)] = vi;
                vel_[static_cast<std::size_t>(j)] = vj;
                rec.omega_dim = Dim;
                for (int d = 0; d < Dim; ++d) rec.omega[static_cast<std::size_t>(d)] = omega[d];
                break;
            }
            rec.t = now_;
            rec.i = static_cast<std::int32_t>(i) + 1;
            rec.j = static_cast<std::int32_t>(j) + 1;
            log_.push_back(rec);
            ++counts_[static_cast<std::size_t>(i)];
            ++counts_[static_cast<std::size_t>(j)];
        }
    }

    double time() const { return now_; }
    const collision_log& log() const { return log_; }
    const std::vector<std::int64_t>& collision_counts() const { return counts_; }
    const std::vector<vec<Dim>>& velocities() const { return vel_; }

    double kinetic_energy() const {
        double e = 0.0;
        for (const auto& v : vel_) e += 0.5 * norm2(v);
        return e;
    }

    vec<Dim> momentum() const {
        vec<Dim> p{};
        for (const auto& v : vel_) p += v;
        return p;
    }

private:
    config cfg_;
    rng_engine rng_;
    double now_ = 0.0;
    collision_log log_;
    std::vector<std::int64_t> counts_;
    std::vector<vec<Dim>> vel_;
};

}  // namespace cluskin::dsmc
