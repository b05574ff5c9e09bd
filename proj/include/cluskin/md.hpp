#pragma once

// Event-driven dynamics of N hard disks/spheres of diameter epsilon in the
// reflecting unit box. Exact free flight between events; pair collisions are
// elastic; walls reflect the normal velocity component. The scheduler is the
// standard cell-list design: predictions cover a particle's 3^Dim cell
// neighbourhood, cell crossings trigger re-prediction, and stale queue
// entries are invalidated by per-particle event counters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "cluskin/collision.hpp"
#include "cluskin/collision_log.hpp"
#include "cluskin/random.hpp"
#include "cluskin/vec.hpp"

namespace cluskin::md {

/// Contacts with normal closing speed below this are ignored, so numerically
/// tangent trajectories cannot stall the event loop.
inline constexpr double grazing_tolerance = 1e-12;

/// Pair separations are audited against epsilon - overlap_tolerance at every
/// executed event.
inline constexpr double overlap_tolerance = 1e-12;

template <int Dim>
struct config {
    std::int64_t n = 0;
    double epsilon = 0.0;  // sphere diameter in box-side units; contact at center distance epsilon
    std::uint64_t seed = 0;
    double t_end = 0.0;
    double temperature = 1.0;
    std::int64_t max_pair_events = 0;  // 0 = no budget

    double boltzmann_grad_parameter() const {
        return static_cast<double>(n) * std::pow(epsilon, Dim - 1);
    }
    double packing_fraction() const {
        constexpr double pi = 3.14159265358979323846;
        const double r = 0.5 * epsilon;
        const double sphere = Dim == 2 ? pi * r * r : 4.0 / 3.0 * pi * r * r * r;
        return static_cast<double>(n) * sphere;
    }
};

template <int Dim>
struct particle_state {
    vec<Dim> x{};
    vec<Dim> v{};
};

/// Uniform non-overlapping positions in the admissible region
/// [eps/2, 1-eps/2]^Dim by rejection sampling, Maxwellian velocities at the
/// configured temperature. Deterministic for a given seed; throws when a
/// particle cannot be placed within the attempt budget (overdense input).
template <int Dim>
std::vector<particle_state<Dim>> sample_initial(const config<Dim>& cfg) {
    if (cfg.n < 1) throw std::invalid_argument("need at least one particle");
    const double lo = 0.5 * cfg.epsilon;
    const double hi = 1.0 - 0.5 * cfg.epsilon;
    if (!(cfg.epsilon > 0.0) || !(lo < hi)) {
        throw std::invalid_argument("sphere diameter must lie in (0, 1)");
    }

    rng_engine rng(cfg.seed);
    std::uniform_real_distribution<double> coord(lo, hi);

    const int ncell = std::max(
        1, std::min(static_cast<int>(1.0 / cfg.epsilon),
                    static_cast<int>(std::llround(std::pow(static_cast<double>(cfg.n), 1.0 / Dim)))));
    const double side = 1.0 / ncell;
    auto cell_of = [&](const vec<Dim>& x) {
        std::int64_t idx = 0;
        for (int d = 0; d < Dim; ++d) {
            const int c = std::min(ncell - 1, static_cast<int>(x[d] / side));
            idx = idx * ncell + c;
        }
        return idx;
    };
    std::vector<std::vector<std::int32_t>> cells(
        static_cast<std::size_t>(std::pow(ncell, Dim)) + 1);

    std::vector<particle_state<Dim>> states(static_cast<std::size_t>(cfg.n));
    constexpr int max_attempts = 10000;
    for (std::int64_t i = 0; i < cfg.n; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            vec<Dim> x;
            for (int d = 0; d < Dim; ++d) x[d] = coord(rng);
            bool overlap = false;
            // Scan the 3^Dim neighbourhood of the candidate cell.
            std::array<int, Dim> cc;
            for (int d = 0; d < Dim; ++d) {
                cc[static_cast<std::size_t>(d)] = std::min(ncell - 1, static_cast<int>(x[d] / side));
            }
            std::array<int, Dim> nb;
            auto scan = [&](auto&& self, int depth) -> void {
                if (overlap) return;
                if (depth == Dim) {
                    std::int64_t idx = 0;
                    for (int d = 0; d < Dim; ++d) idx = idx * ncell + nb[static_cast<std::size_t>(d)];
                    for (std::int32_t q : cells[static_cast<std::size_t>(idx)]) {
                        if (norm2(states[static_cast<std::size_t>(q)].x - x) <
                            cfg.epsilon * cfg.epsilon) {
                            overlap = true;
                            return;
                        }
                    }
                    return;
                }
                const int c = cc[static_cast<std::size_t>(depth)];
                for (int o = std::max(0, c - 1); o <= std::min(ncell - 1, c + 1); ++o) {
                    nb[static_cast<std::size_t>(depth)] = o;
                    self(self, depth + 1);
                }
            };
            scan(scan, 0);
            if (!overlap) {
                states[static_cast<std::size_t>(i)].x = x;
                cells[static_cast<std::size_t>(cell_of(x))].push_back(static_cast<std::int32_t>(i));
                placed = true;
            }
        }
        if (!placed) {
            throw std::runtime_error("sample_initial: placement rejected " +
                                     std::to_string(max_attempts) +
                                     " times; configuration too dense");
        }
    }
    const double sigma = std::sqrt(cfg.temperature);
    for (auto& s : states) s.v = gaussian_vector<Dim>(rng, sigma);
    return states;
}

namespace detail {

struct event {
    double time = 0.0;
    std::uint8_t kind = 0;  // 0 pair, 1 wall, 2 cell crossing
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int8_t axis = 0;
    std::int8_t dir = 0;  // wall: 0 low / 1 high side; cell: -1 or +1
    std::uint64_t count_a = 0;
    std::uint64_t count_b = 0;
};

// Simultaneous events execute in (time, kind, labels) order.
struct event_after {
    bool operator()(const event& x, const event& y) const {
        if (x.time != y.time) return x.time > y.time;
        if (x.kind != y.kind) return x.kind > y.kind;
        if (x.a != y.a) return x.a > y.a;
        return x.b > y.b;
    }
};

}  // namespace detail

template <int Dim>
class simulation {
public:
    explicit simulation(const config<Dim>& cfg) : simulation(cfg, sample_initial(cfg)) {}

    simulation(const config<Dim>& cfg, std::vector<particle_state<Dim>> init) : cfg_(cfg) {
        if (cfg_.n != static_cast<std::int64_t>(init.size())) {
            throw std::invalid_argument("state count does not match config");
        }
        if (!(cfg_.t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
        const double lo = 0.5 * cfg_.epsilon;
        const double hi = 1.0 - 0.5 * cfg_.epsilon;
        pos_.resize(init.size());
        vel_.resize(init.size());
        for (std::size_t i = 0; i < init.size(); ++i) {
            for (int d = 0; d < Dim; ++d) {
                if (init[i].x[d] < lo - 1e-12 || init[i].x[d] > hi + 1e-12) {
                    throw std::invalid_argument("initial center outside the admissible region");
                }
            }
            pos_[i] = init[i].x;
            vel_[i] = init[i].v;
        }
        sync_.assign(init.size(), 0.0);
        count_.assign(init.size(), 0);

        ncell_ = std::max(
            1, std::min(static_cast<int>(1.0 / cfg_.epsilon),
                        static_cast<int>(
                            std::llround(std::pow(static_cast<double>(cfg_.n), 1.0 / Dim)))));
        side_ = 1.0 / ncell_;
        std::int64_t total_cells = 1;
        for (int d = 0; d < Dim; ++d) total_cells *= ncell_;
        head_.assign(static_cast<std::size_t>(total_cells), -1);
        next_.assign(init.size(), -1);
        prev_.assign(init.size(), -1);
        ccoord_.resize(init.size());
        for (std::size_t i = 0; i < init.size(); ++i) {
            for (int d = 0; d < Dim; ++d) {
                ccoord_[i][static_cast<std::size_t>(d)] =
                    std::min(ncell_ - 1, static_cast<int>(pos_[i][d] / side_));
            }
            link_cell(static_cast<std::int32_t>(i));
        }
        audit_initial_overlaps();

        for (std::int32_t p = 0; p < cfg_.n; ++p) {
            schedule_single_events(p);
            schedule_pair_events(p, /*only_higher=*/true);
        }
    }

    /// Advances the event queue to t_end (or until the pair-event budget is
    /// exhausted) and synchronizes all particles to the stop time.
    void run() {
        while (!queue_.empty()) {
            if (cfg_.max_pair_events > 0 && pair_events_ >= cfg_.max_pair_events) break;
            const detail::event ev = queue_.top();
            if (ev.time > cfg_.t_end) break;
            queue_.pop();
            if (!valid(ev)) continue;
            if (ev.time < now_) throw std::logic_error("event queue produced a negative time step");
            now_ = ev.time;
            switch (ev.kind) {
                case 0: process_pair(ev); break;
                case 1: process_wall(ev); break;
                default: process_crossing(ev); break;
            }
        }
        const double stop = (cfg_.max_pair_events > 0 && pair_events_ >= cfg_.max_pair_events)
                                ? now_
                                : cfg_.t_end;
        for (std::int32_t p = 0; p < cfg_.n; ++p) advance(p, stop);
        now_ = stop;
    }

    double time() const { return now_; }
    const collision_log& log() const { return log_; }
    std::int64_t pair_event_count() const { return pair_events_; }
    std::int64_t wall_event_count() const { return wall_events_; }

    std::vector<particle_state<Dim>> states() const {
        std::vector<particle_state<Dim>> out(pos_.size());
        for (std::size_t i = 0; i < pos_.size(); ++i) {
            out[i].x = pos_[i] + (now_ - sync_[i]) * vel_[i];
            out[i].v = vel_[i];
        }
        return out;
    }

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

    const config<Dim>& configuration() const { return cfg_; }

private:
    void link_cell(std::int32_t p) {
        const std::int64_t c = cell_index(ccoord_[static_cast<std::size_t>(p)]);
        next_[static_cast<std::size_t>(p)] = head_[static_cast<std::size_t>(c)];
        prev_[static_cast<std::size_t>(p)] = -1;
        if (head_[static_cast<std::size_t>(c)] >= 0) {
            prev_[static_cast<std::size_t>(head_[static_cast<std::size_t>(c)])] = p;
        }
        head_[static_cast<std::size_t>(c)] = p;
    }

    void unlink_cell(std::int32_t p) {
        const std::int64_t c = cell_index(ccoord_[static_cast<std::size_t>(p)]);
        const std::int32_t nx = next_[static_cast<std::size_t>(p)];
        const std::int32_t pv = prev_[static_cast<std::size_t>(p)];
        if (pv >= 0) next_[static_cast<std::size_t>(pv)] = nx;
        else head_[static_cast<std::size_t>(c)] = nx;
        if (nx >= 0) prev_[static_cast<std::size_t>(nx)] = pv;
    }

    std::int64_t cell_index(const std::array<int, Dim>& cc) const {
        std::int64_t idx = 0;
        for (int d = 0; d < Dim; ++d) idx = idx * ncell_ + cc[static_cast<std::size_t>(d)];
        return idx;
    }

    void advance(std::int32_t p, double t) {
        pos_[static_cast<std::size_t>(p)] +=
            (t - sync_[static_cast<std::size_t>(p)]) * vel_[static_cast<std::size_t>(p)];
        sync_[static_cast<std::size_t>(p)] = t;
    }

    vec<Dim> position_at(std::int32_t p, double t) const {
        return pos_[static_cast<std::size_t>(p)] +
               (t - sync_[static_cast<std::size_t>(p)]) * vel_[static_cast<std::size_t>(p)];
    }

    bool valid(const detail::event& ev) const {
        if (count_[static_cast<std::size_t>(ev.a)] != ev.count_a) return false;
        return ev.kind != 0 || count_[static_cast<std::size_t>(ev.b)] == ev.count_b;
    }

    void schedule_single_events(std::int32_t p) {
        const auto& x = pos_[static_cast<std::size_t>(p)];
        const auto& v = vel_[static_cast<std::size_t>(p)];
        const double lo = 0.5 * cfg_.epsilon;
        const double hi = 1.0 - 0.5 * cfg_.epsilon;
        const auto& cc = ccoord_[static_cast<std::size_t>(p)];

        double wall_t = std::numeric_limits<double>::infinity();
        std::int8_t wall_axis = 0, wall_side = 0;
        double cell_t = std::numeric_limits<double>::infinity();
        std::int8_t cell_axis = 0, cell_dir = 0;
        for (int d = 0; d < Dim; ++d) {
            if (v[d] > 0.0) {
                const double tw = (hi - x[d]) / v[d];
                if (tw < wall_t) { wall_t = tw; wall_axis = static_cast<std::int8_t>(d); wall_side = 1; }
                if (cc[static_cast<std::size_t>(d)] + 1 < ncell_) {
                    const double bound = (cc[static_cast<std::size_t>(d)] + 1) * side_;
                    const double tc = (bound - x[d]) / v[d];
                    if (tc < cell_t) { cell_t = tc; cell_axis = static_cast<std::int8_t>(d); cell_dir = 1; }
                }
            } else if (v[d] < 0.0) {
                const double tw = (lo - x[d]) / v[d];
                if (tw < wall_t) { wall_t = tw; wall_axis = static_cast<std::int8_t>(d); wall_side = 0; }
                if (cc[static_cast<std::size_t>(d)] > 0) {
                    const double bound = cc[static_cast<std::size_t>(d)] * side_;
                    const double tc = (bound - x[d]) / v[d];
                    if (tc < cell_t) { cell_t = tc; cell_axis = static_cast<std::int8_t>(d); cell_dir = -1; }
                }
            }
        }
        const std::uint64_t cnt = count_[static_cast<std::size_t>(p)];
        if (std::isfinite(wall_t)) {
            queue_.push({now_ + std::max(0.0, wall_t), 1, p, -1, wall_axis, wall_side, cnt, 0});
        }
        if (std::isfinite(cell_t) && cell_t < wall_t) {
            queue_.push({now_ + std::max(0.0, cell_t), 2, p, -1, cell_axis, cell_dir, cnt, 0});
        }
    }

    void schedule_pair_events(std::int32_t p, bool only_higher) {
        const auto& cc = ccoord_[static_cast<std::size_t>(p)];
        const vec<Dim> xp = position_at(p, now_);
        std::array<int, Dim> nb;
        auto scan = [&](auto&& self, int depth) -> void {
            if (depth == Dim) {
                std::int64_t idx = 0;
                for (int d = 0; d < Dim; ++d) idx = idx * ncell_ + nb[static_cast<std::size_t>(d)];
                for (std::int32_t q = head_[static_cast<std::size_t>(idx)]; q >= 0;
                     q = next_[static_cast<std::size_t>(q)]) {
                    if (q == p || (only_higher && q < p)) continue;
                    const vec<Dim> dx = position_at(q, now_) - xp;
                    const vec<Dim> dv = vel_[static_cast<std::size_t>(q)] - vel_[static_cast<std::size_t>(p)];
                    const auto s = predict_contact(dx, dv, cfg_.epsilon, grazing_tolerance);
                    if (!s) continue;
                    const std::int32_t a = std::min(p, q);
                    const std::int32_t b = std::max(p, q);
                    queue_.push({now_ + *s, 0, a, b, 0, 0, count_[static_cast<std::size_t>(a)],
                                 count_[static_cast<std::size_t>(b)]});
                }
                return;
            }
            const int c = cc[static_cast<std::size_t>(depth)];
            for (int o = std::max(0, c - 1); o <= std::min(ncell_ - 1, c + 1); ++o) {
                nb[static_cast<std::size_t>(depth)] = o;
                self(self, depth + 1);
            }
        };
        scan(scan, 0);
    }

    void process_pair(const detail::event& ev) {
        advance(ev.a, ev.time);
        advance(ev.b, ev.time);
        auto& xa = pos_[static_cast<std::size_t>(ev.a)];
        auto& xb = pos_[static_cast<std::size_t>(ev.b)];
        vec<Dim> dx = xb - xa;
        const double dist = norm(dx);
        if (dist < cfg_.epsilon - overlap_tolerance) {
            throw std::runtime_error("hard fault: pair overlap beyond tolerance");
        }
        const vec<Dim> omega = (1.0 / dist) * dx;
        const double g =
            dot(vel_[static_cast<std::size_t>(ev.a)] - vel_[static_cast<std::size_t>(ev.b)], omega);
        ++count_[static_cast<std::size_t>(ev.a)];
        ++count_[static_cast<std::size_t>(ev.b)];
        if (g > grazing_tolerance) {
            // Land the pair at separation exactly epsilon; floating-point
            // contact can otherwise sit a few ulps inside and cascade.
            const vec<Dim> mid = 0.5 * (xa + xb);
            xa = mid - (0.5 * cfg_.epsilon) * omega;
            xb = mid + (0.5 * cfg_.epsilon) * omega;
            auto [va, vb] = elastic_collision(vel_[static_cast<std::size_t>(ev.a)],
                                              vel_[static_cast<std::size_t>(ev.b)], omega);
            vel_[static_cast<std::size_t>(ev.a)] = va;
            vel_[static_cast<std::size_t>(ev.b)] = vb;
            log_event rec;
            rec.t = ev.time;
            rec.i = ev.a + 1;
            rec.j = ev.b + 1;
            rec.omega_dim = Dim;
            for (int d = 0; d < Dim; ++d) rec.omega[static_cast<std::size_t>(d)] = omega[d];
            log_.push_back(rec);
            ++pair_events_;
        }
        schedule_single_events(ev.a);
        schedule_pair_events(ev.a, false);
        schedule_single_events(ev.b);
        schedule_pair_events(ev.b, false);
    }

    void process_wall(const detail::event& ev) {
        advance(ev.a, ev.time);
        const double lo = 0.5 * cfg_.epsilon;
        const double hi = 1.0 - 0.5 * cfg_.epsilon;
        const int d = ev.axis;
        pos_[static_cast<std::size_t>(ev.a)][d] = ev.dir ? hi : lo;
        vel_[static_cast<std::size_t>(ev.a)][d] = -vel_[static_cast<std::size_t>(ev.a)][d];
        ++count_[static_cast<std::size_t>(ev.a)];
        log_event rec;
        rec.t = ev.time;
        rec.i = ev.a + 1;
        rec.j = -1;
        log_.push_back(rec);
        ++wall_events_;
        schedule_single_events(ev.a);
        schedule_pair_events(ev.a, false);
    }

    void process_crossing(const detail::event& ev) {
        advance(ev.a, ev.time);
        unlink_cell(ev.a);
        ccoord_[static_cast<std::size_t>(ev.a)][static_cast<std::size_t>(ev.axis)] += ev.dir;
        link_cell(ev.a);
        ++count_[static_cast<std::size_t>(ev.a)];
        schedule_single_events(ev.a);
        schedule_pair_events(ev.a, false);
    }

    void audit_initial_overlaps() {
        for (std::int32_t p = 0; p < cfg_.n; ++p) {
            const auto& cc = ccoord_[static_cast<std::size_t>(p)];
            std::array<int, Dim> nb;
            auto scan = [&](auto&& self, int depth) -> void {
                if (depth == Dim) {
                    std::int64_t idx = 0;
                    for (int d = 0; d < Dim; ++d) idx = idx * ncell_ + nb[static_cast<std::size_t>(d)];
                    for (std::int32_t q = head_[static_cast<std::size_t>(idx)]; q >= 0;
                         q = next_[static_cast<std::size_t>(q)]) {
                        if (q <= p) continue;
                        if (norm(pos_[static_cast<std::size_t>(q)] - pos_[static_cast<std::size_t>(p)]) <
                            cfg_.epsilon - overlap_tolerance) {
                            throw std::invalid_argument("initial configuration contains overlaps");
                        }
                    }
                    return;
                }
                const int c = cc[static_cast<std::size_t>(depth)];
                for (int o = std::max(0, c - 1); o <= std::min(ncell_ - 1, c + 1); ++o) {
                    nb[static_cast<std::size_t>(depth)] = o;
                    self(self, depth + 1);
                }
            };
            scan(scan, 0);
        }
    }

    config<Dim> cfg_;
    std::vector<vec<Dim>> pos_, vel_;
    std::vector<double> sync_;
    std::vector<std::uint64_t> count_;
    std::vector<std::array<int, Dim>> ccoord_;
    std::vector<std::int32_t> head_, next_, prev_;
    int ncell_ = 1;
    double side_ = 1.0;
    double now_ = 0.0;
    std::int64_t pair_events_ = 0;
    std::int64_t wall_events_ = 0;
    collision_log log_;
    std::priority_queue<detail::event, std::vector<detail::event>, detail::event_after> queue_;
};

/// Empirical per-particle mean free time over a window of the log:
/// N |window| / (2 * pair events in window). The kinetic time of an MD
/// instant is its physical time divided by this scale.
inline double measure_mean_free_time(const collision_log& log, std::int64_t n, double window_lo,
                                     double window_hi) {
    if (!(window_hi > window_lo)) throw std::invalid_argument("empty measurement window");
    std::int64_t events = 0;
    for (const auto& e : log) {
        if (e.is_pair() && e.t > window_lo && e.t <= window_hi) ++events;
    }
    if (events < 100) {
        throw std::runtime_error("mean free time window contains fewer than 100 events");
    }
    return static_cast<double>(n) * (window_hi - window_lo) / (2.0 * static_cast<double>(events));
}

}  // namespace cluskin::md
