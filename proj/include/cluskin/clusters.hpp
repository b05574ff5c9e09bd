#pragma once

// Cluster statistics over collision logs. Two particles are t-neighbours if
// they collided during [0, t]; a t-cluster is a connected component of that
// relation. Backward clusters collect the particles that influenced a tagged
// particle's history, scanning the log from t down to 0. Wall events never
// contribute to either notion.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cluskin/collision_log.hpp"

namespace cluskin::clusters {

struct pair_event {
    double t = 0.0;
    std::int32_t i = 0;
    std::int32_t j = 0;
};

/// Keeps the pair events of a log, in original (time) order.
inline std::vector<pair_event> extract_pair_events(const collision_log& log) {
    std::vector<pair_event> out;
    out.reserve(log.size());
    for (const auto& e : log) {
        if (e.is_pair()) out.push_back({e.t, e.i, e.j});
    }
    return out;
}

/// Disjoint sets over particle labels 1..n with union by size and path
/// halving; near-linear total cost over any event sequence.
class union_find {
public:
    explicit union_find(std::int64_t n)
        : parent_(static_cast<std::size_t>(n) + 1),
          size_(static_cast<std::size_t>(n) + 1, 1),
          n_(n),
          components_(n) {
        for (std::size_t v = 0; v < parent_.size(); ++v) parent_[v] = static_cast<std::int32_t>(v);
    }

    std::int64_t particle_count() const { return n_; }
    std::int64_t component_count() const { return components_; }

    std::int32_t find(std::int32_t v) {
        check(v);
        while (parent_[static_cast<std::size_t>(v)] != v) {
            parent_[static_cast<std::size_t>(v)] =
                parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(v)])];
            v = parent_[static_cast<std::size_t>(v)];
        }
        return v;
    }

    bool unite(std::int32_t a, std::int32_t b) {
        std::int32_t ra = find(a);
        std::int32_t rb = find(b);
        if (ra == rb) return false;
        if (size_[static_cast<std::size_t>(ra)] < size_[static_cast<std::size_t>(rb)]) {
            std::swap(ra, rb);
        }
        parent_[static_cast<std::size_t>(rb)] = ra;
        size_[static_cast<std::size_t>(ra)] += size_[static_cast<std::size_t>(rb)];
        --components_;
        return true;
    }

    std::int64_t component_size(std::int32_t v) { return size_[static_cast<std::size_t>(find(v))]; }

private:
    void check(std::int32_t v) const {
        if (v < 1 || v > n_) throw std::out_of_range("particle label out of range");
    }

    std::vector<std::int32_t> parent_;
    std::vector<std::int64_t> size_;
    std::int64_t n_ = 0;
    std::int64_t components_ = 0;
};

/// Incremental t-cluster partition. Components only ever merge as t grows,
/// so advancing the observation time reuses all prior union work; one pass
/// over a sorted log serves any increasing sequence of snapshot times.
class cluster_partition {
public:
    explicit cluster_partition(std::int64_t n) : uf_(n) {}

    /// Folds in all events with time <= t. `events` must be time-sorted and
    /// identical across calls on the same partition.
    void advance(std::span<const pair_event> events, double t) {
        if (t < processed_to_) throw std::invalid_argument("cannot rewind a cluster partition");
        while (cursor_ < events.size() && events[cursor_].t <= t) {
            const auto& e = events[cursor_];
            if (e.t < last_event_time_) throw std::invalid_argument("collision log is not time-sorted");
            last_event_time_ = e.t;
            uf_.unite(e.i, e.j);
            ++cursor_;
        }
        processed_to_ = t;
    }

    double processed_to() const { return processed_to_; }
    std::int64_t particle_count() const { return uf_.particle_count(); }
    std::int64_t component_count() const { return uf_.component_count(); }
    union_find& components() { return uf_; }

private:
    union_find uf_;
    double processed_to_ = 0.0;
    double last_event_time_ = 0.0;
    std::size_t cursor_ = 0;
};

inline cluster_partition build_partition(std::span<const pair_event> events, std::int64_t n,
                                         double t) {
    cluster_partition p(n);
    p.advance(events, t);
    return p;
}

/// Cluster size census at one time: counts[k] is the number of clusters of
/// size k, so sum_k k * counts[k] = N and sum_k counts[k] = component count.
struct size_distribution {
    double t = 0.0;
    std::int64_t n_particles = 0;
    std::int64_t n_clusters = 0;
    std::map<std::int64_t, std::int64_t> counts;

    double mass_fraction(std::int64_t k) const {  // f^N(k) = k n(k) / N
        const auto it = counts.find(k);
        return it == counts.end() ? 0.0
                                  : static_cast<double>(k) * static_cast<double>(it->second) /
                                        static_cast<double>(n_particles);
    }
    double cluster_fraction(std::int64_t k) const {  // g^N(k) = n(k) / N_c
        const auto it = counts.find(k);
        return it == counts.end() ? 0.0
                                  : static_cast<double>(it->second) / static_cast<double>(n_clusters);
    }
    std::int64_t largest() const { return counts.empty() ? 0 : counts.rbegin()->first; }
    double largest_mass_fraction() const {
        return static_cast<double>(largest()) / static_cast<double>(n_particles);
    }
    double cluster_density() const {  // N_c / N
        return static_cast<double>(n_clusters) / static_cast<double>(n_particles);
    }

    std::map<std::int64_t, double> mass_map() const {
        std::map<std::int64_t, double> m;
        for (const auto& [k, n] : counts) m[k] = mass_fraction(k);
        return m;
    }
    std::map<std::int64_t, double> fraction_map() const {
        std::map<std::int64_t, double> m;
        for (const auto& [k, n] : counts) m[k] = cluster_fraction(k);
        return m;
    }
};

inline size_distribution measure_sizes(cluster_partition& p) {
    size_distribution d;
    d.t = p.processed_to();
    d.n_particles = p.particle_count();
    d.n_clusters = p.component_count();
    auto& uf = p.components();
    for (std::int32_t v = 1; v <= d.n_particles; ++v) {
        if (uf.find(v) == v) ++d.counts[uf.component_size(v)];
    }
    return d;
}

/// Backward cluster of one tagged particle: every member is linked to the
/// tag by a chain of collisions with strictly decreasing times, and
/// entry_time records the collision through which each member joined
/// (the tag itself carries the observation time).
struct backward_cluster {
    std::int32_t tag = 0;
    double t = 0.0;
    std::vector<std::pair<std::int32_t, double>> members;  // (label, entry time), label-sorted

    std::size_t size() const { return members.size(); }
    bool contains(std::int32_t label) const {
        return std::any_of(members.begin(), members.end(),
                           [label](const auto& m) { return m.first == label; });
    }
};

/// Per-particle view of a pair-event log, for backward-cluster traversal.
/// The traversal pops members in decreasing entry-time order (a lazy
/// max-heap), which reproduces the chronological backward scan exactly while
/// touching only the events of actual members instead of the whole log.
class event_index {
public:
    event_index(std::span<const pair_event> events, std::int64_t n) : n_(n) {
        std::vector<std::int32_t> deg(static_cast<std::size_t>(n) + 1, 0);
        for (const auto& e : events) {
            bounds_check(e.i);
            bounds_check(e.j);
            ++deg[static_cast<std::size_t>(e.i)];
            ++deg[static_cast<std::size_t>(e.j)];
        }
        offsets_.assign(static_cast<std::size_t>(n) + 2, 0);
        for (std::int64_t v = 1; v <= n; ++v) {
            offsets_[static_cast<std::size_t>(v) + 1] =
                offsets_[static_cast<std::size_t>(v)] + deg[static_cast<std::size_t>(v)];
        }
        links_.resize(static_cast<std::size_t>(offsets_.back()));
        std::vector<std::int64_t> fill(offsets_.begin(), offsets_.end() - 1);
        double last = 0.0;
        for (const auto& e : events) {
            if (e.t < last) throw std::invalid_argument("collision log is not time-sorted");
            last = e.t;
            links_[static_cast<std::size_t>(fill[static_cast<std::size_t>(e.i)]++)] = {e.t, e.j};
            links_[static_cast<std::size_t>(fill[static_cast<std::size_t>(e.j)]++)] = {e.t, e.i};
        }
    }

    std::int64_t particle_count() const { return n_; }

    backward_cluster trace(std::int32_t tag, double t) const {
        scratch s;
        return trace_with(tag, t, s);
    }

    /// Histogram of backward-cluster sizes over every tag; values are counts.
    std::map<std::int64_t, std::int64_t> size_histogram(double t) const {
        std::map<std::int64_t, std::int64_t> hist;
        scratch s;
        for (std::int32_t tag = 1; tag <= n_; ++tag) {
            ++hist[static_cast<std::int64_t>(trace_with(tag, t, s).size())];
        }
        return hist;
    }

private:
    struct link {
        double t;
        std::int32_t partner;
    };
    struct scratch {
        std::unordered_map<std::int32_t, double> entry;
        std::unordered_set<std::int32_t> done;
        std::vector<std::pair<double, std::int32_t>> heap;
    };

    void bounds_check(std::int32_t v) const {
        if (v < 1 || v > n_) throw std::out_of_range("particle label out of range");
    }

    backward_cluster trace_with(std::int32_t tag, double t, scratch& s) const {
        bounds_check(tag);
        if (!(t >= 0.0)) throw std::invalid_argument("observation time must be nonnegative");
        s.entry.clear();
        s.done.clear();
        s.heap.clear();
        s.entry.emplace(tag, t);
        s.heap.emplace_back(t, tag);
        while (!s.heap.empty()) {
            std::pop_heap(s.heap.begin(), s.heap.end());
            const auto [tau, u] = s.heap.back();
            s.heap.pop_back();
            if (s.done.count(u) != 0 || s.entry.at(u) != tau) continue;  // stale heap entry
            s.done.insert(u);
            const auto begin = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(u)]);
            const auto end = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(u) + 1]);
            for (std::size_t idx = end; idx-- > begin;) {
                const auto& l = links_[idx];
                if (l.t > tau) continue;
                const auto it = s.entry.find(l.partner);
                if (it == s.entry.end()) {
                    s.entry.emplace(l.partner, l.t);
                    s.heap.emplace_back(l.t, l.partner);
                    std::push_heap(s.heap.begin(), s.heap.end());
                } else if (l.t > it->second && s.done.count(l.partner) == 0) {
                    // Found a later link into the cluster; the chronological
                    // scan would have recruited the partner through it.
                    it->second = l.t;
                    s.heap.emplace_back(l.t, l.partner);
                    std::push_heap(s.heap.begin(), s.heap.end());
                }
            }
        }
        backward_cluster bc;
        bc.tag = tag;
        bc.t = t;
        bc.members.assign(s.entry.begin(), s.entry.end());
        std::sort(bc.members.begin(), bc.members.end());
        return bc;
    }

    std::int64_t n_ = 0;
    std::vector<std::int64_t> offsets_;
    std::vector<link> links_;
};

inline backward_cluster backward_cluster_of(std::span<const pair_event> events, std::int64_t n,
                                            std::int32_t tag, double t) {
    return event_index(events, n).trace(tag, t);
}

/// Fraction of particles whose backward cluster on (0, t) has a given size.
inline std::map<std::int64_t, double> backward_size_fractions(std::span<const pair_event> events,
                                                              std::int64_t n, double t) {
    const auto hist = event_index(events, n).size_histogram(t);
    std::map<std::int64_t, double> out;
    for (const auto& [size, count] : hist) {
        out[size] = static_cast<double>(count) / static_cast<double>(n);
    }
    return out;
}

/// CSV emission, one row per (t, k): t,k,n,f_emp,g_emp.
inline void write_distribution_csv(std::ostream& out,
                                   std::span<const size_distribution> snapshots,
                                   bool header = true) {
    if (header) out << "t,k,n,f_emp,g_emp\n";
    for (const auto& d : snapshots) {
        for (const auto& [k, n] : d.counts) {
            out << format_double(d.t) << ',' << k << ',' << n << ','
                << format_double(d.mass_fraction(k)) << ',' << format_double(d.cluster_fraction(k))
                << '\n';
        }
    }
}

}  // namespace cluskin::clusters
