#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <thread>
#include <set>
#include <sstream>

#include "cluskin/clusters.hpp"

using namespace cluskin;
using clusters::pair_event;

namespace {

// Reference backward cluster: the literal chronological scan from t down to
// 0, adding the partner whenever exactly one participant is already a
// member. O(events) per tag, used only to cross-check the indexed traversal.
std::vector<std::pair<std::int32_t, double>> reverse_scan_reference(
    const std::vector<pair_event>& events, std::int32_t tag, double t) {
    std::map<std::int32_t, double> entry;
    entry[tag] = t;
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
        if (it->t > t) continue;
        const bool has_i = entry.count(it->i) > 0 && entry[it->i] >= it->t;
        const bool has_j = entry.count(it->j) > 0 && entry[it->j] >= it->t;
        if (has_i && !has_j) entry[it->j] = it->t;
        else if (has_j && !has_i) entry[it->i] = it->t;
    }
    return {entry.begin(), entry.end()};
}

std::vector<pair_event> random_log(std::mt19937_64& rng, int n, int events, double t_max) {
    std::uniform_real_distribution<double> time(0.0, t_max);
    std::uniform_int_distribution<std::int32_t> label(1, n);
    std::vector<pair_event> log;
    for (int e = 0; e < events; ++e) {
        std::int32_t i = label(rng), j = label(rng);
        while (j == i) j = label(rng);
        log.push_back({time(rng), i, j});
    }
    std::sort(log.begin(), log.end(), [](const pair_event& a, const pair_event& b) { return a.t < b.t; });
    return log;
}

}  // namespace

TEST_CASE("union find", "[clusters]") {
    clusters::union_find uf(5);
    CHECK(uf.component_count() == 5);
    CHECK(uf.unite(1, 2));
    CHECK(!uf.unite(2, 1));
    CHECK(uf.unite(2, 3));
    CHECK(uf.component_count() == 3);
    CHECK(uf.component_size(3) == 3);
    CHECK(uf.find(1) == uf.find(3));
    CHECK(uf.find(4) != uf.find(5));
    CHECK_THROWS_AS(uf.find(0), std::out_of_range);
    CHECK_THROWS_AS(uf.find(6), std::out_of_range);
}

TEST_CASE("partition construction", "[clusters]") {
    SECTION("empty log gives singletons") {
        std::vector<pair_event> log;
        auto p = clusters::build_partition(log, 4, 1.0);
        CHECK(p.component_count() == 4);
    }
    SECTION("time filtering") {
        const std::vector<pair_event> log{{0.1, 1, 2}, {0.2, 2, 3}};
        auto p1 = clusters::build_partition(log, 4, 1.0);
        CHECK(p1.component_count() == 2);
        CHECK(p1.components().find(1) == p1.components().find(3));
        CHECK(p1.components().find(1) != p1.components().find(4));

        auto p2 = clusters::build_partition(log, 4, 0.15);
        CHECK(p2.component_count() == 3);
        CHECK(p2.components().find(1) == p2.components().find(2));
        CHECK(p2.components().find(3) != p2.components().find(2));
    }
    SECTION("labels out of range are rejected") {
        const std::vector<pair_event> log{{0.1, 1, 9}};
        CHECK_THROWS_AS(clusters::build_partition(log, 4, 1.0), std::out_of_range);
    }
    SECTION("unsorted logs are rejected") {
        const std::vector<pair_event> log{{0.5, 1, 2}, {0.2, 2, 3}};
        CHECK_THROWS_AS(clusters::build_partition(log, 4, 1.0), std::invalid_argument);
    }
    SECTION("incremental snapshots equal fresh builds") {
        std::mt19937_64 rng(7);
        const auto log = random_log(rng, 60, 150, 3.0);
        clusters::cluster_partition inc(60);
        for (double t : {0.3, 0.9, 1.4, 2.2, 3.0}) {
            inc.advance(log, t);
            auto fresh = clusters::build_partition(log, 60, t);
            auto a = clusters::measure_sizes(inc);
            auto b = clusters::measure_sizes(fresh);
            CHECK(a.counts == b.counts);
        }
        CHECK_THROWS_AS(inc.advance(log, 1.0), std::invalid_argument);  // cannot rewind
    }
}

TEST_CASE("size distribution", "[clusters]") {
    SECTION("all singletons") {
        std::vector<pair_event> log;
        auto p = clusters::build_partition(log, 5, 0.0);
        auto d = clusters::measure_sizes(p);
        CHECK(d.counts.at(1) == 5);
        CHECK(d.mass_fraction(1) == 1.0);
        CHECK(d.cluster_fraction(1) == 1.0);
        CHECK(d.largest() == 1);
    }
    SECTION("one triple and one singleton") {
        const std::vector<pair_event> log{{0.1, 1, 2}, {0.2, 2, 3}};
        auto p = clusters::build_partition(log, 4, 1.0);
        auto d = clusters::measure_sizes(p);
        CHECK(d.mass_fraction(3) == Catch::Approx(0.75));
        CHECK(d.mass_fraction(1) == Catch::Approx(0.25));
        CHECK(d.cluster_fraction(3) == Catch::Approx(0.5));
        CHECK(d.cluster_fraction(1) == Catch::Approx(0.5));
        CHECK(d.largest_mass_fraction() == Catch::Approx(0.75));
        CHECK(d.cluster_density() == Catch::Approx(0.5));  // N_c / N
    }
    SECTION("mass and normalization invariants on random logs") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 5; ++trial) {
            const int n = 80;
            const auto log = random_log(rng, n, 120, 1.0);
            auto p = clusters::build_partition(log, n, 1.0);
            auto d = clusters::measure_sizes(p);
            std::int64_t mass = 0, clusters_total = 0;
            double f_sum = 0.0, g_sum = 0.0;
            for (const auto& [k, c] : d.counts) {
                mass += k * c;
                clusters_total += c;
                f_sum += d.mass_fraction(k);
                g_sum += d.cluster_fraction(k);
            }
            CHECK(mass == n);
            CHECK(clusters_total == d.n_clusters);
            CHECK(f_sum == Catch::Approx(1.0).epsilon(1e-12));
            CHECK(g_sum == Catch::Approx(1.0).epsilon(1e-12));
        }
    }
    SECTION("label permutation leaves the size distribution unchanged") {
        std::mt19937_64 rng(13);
        const int n = 40;
        auto log = random_log(rng, n, 70, 1.0);
        auto base_partition = clusters::build_partition(log, n, 1.0);
        auto base = clusters::measure_sizes(base_partition);
        std::vector<std::int32_t> perm(static_cast<std::size_t>(n) + 1);
        for (int v = 1; v <= n; ++v) perm[static_cast<std::size_t>(v)] = v;
        std::shuffle(perm.begin() + 1, perm.end(), rng);
        auto permuted = log;
        for (auto& e : permuted) {
            e.i = perm[static_cast<std::size_t>(e.i)];
            e.j = perm[static_cast<std::size_t>(e.j)];
        }
        auto p2 = clusters::build_partition(permuted, n, 1.0);
        CHECK(clusters::measure_sizes(p2).counts == base.counts);
    }
}

TEST_CASE("monotone coarsening", "[clusters]") {
    std::mt19937_64 rng(17);
    const int n = 100;
    const auto log = random_log(rng, n, 260, 2.0);
    clusters::cluster_partition part(n);
    std::int64_t prev_components = n + 1;
    std::int64_t prev_largest = 0;
    std::vector<std::int32_t> prev_root(static_cast<std::size_t>(n) + 1, 0);
    bool first = true;
    for (double t : {0.2, 0.6, 1.0, 1.5, 2.0}) {
        part.advance(log, t);
        auto d = clusters::measure_sizes(part);
        CHECK(d.n_clusters <= prev_components);
        CHECK(d.largest() >= prev_largest);
        prev_components = d.n_clusters;
        prev_largest = d.largest();
        // Refinement: particles sharing a cluster keep sharing it later.
        std::vector<std::int32_t> root(static_cast<std::size_t>(n) + 1);
        for (int v = 1; v <= n; ++v) root[static_cast<std::size_t>(v)] = part.components().find(v);
        if (!first) {
            for (int a = 1; a <= n; ++a) {
                for (int b = a + 1; b <= n; ++b) {
                    if (prev_root[static_cast<std::size_t>(a)] == prev_root[static_cast<std::size_t>(b)]) {
                        REQUIRE(root[static_cast<std::size_t>(a)] == root[static_cast<std::size_t>(b)]);
                    }
                }
            }
        }
        prev_root = root;
        first = false;
    }
}

TEST_CASE("backward clusters", "[clusters]") {
    SECTION("hand-traced example") {
        const std::vector<pair_event> log{{0.5, 2, 3}, {0.7, 3, 4}, {0.9, 1, 2}};
        const auto bc = clusters::backward_cluster_of(log, 4, 1, 1.0);
        REQUIRE(bc.size() == 3);
        CHECK(bc.contains(1));
        CHECK(bc.contains(2));
        CHECK(bc.contains(3));
        CHECK(!bc.contains(4));  // 3 was not yet a member when the scan passed 0.7
        for (const auto& [label, entry] : bc.members) {
            if (label == 2) CHECK(entry == 0.9);
            if (label == 3) CHECK(entry == 0.5);
        }
        // The full t-cluster of particle 1 is larger: {1,2,3,4}.
        auto p = clusters::build_partition(log, 4, 1.0);
        CHECK(p.components().component_size(1) == 4);
    }
    SECTION("tag with no events is a singleton") {
        const std::vector<pair_event> log{{0.2, 2, 3}};
        const auto bc = clusters::backward_cluster_of(log, 4, 1, 1.0);
        CHECK(bc.size() == 1);
        CHECK(bc.contains(1));
    }
    SECTION("strictly decreasing chain is collected fully") {
        const std::vector<pair_event> log{{0.1, 3, 4}, {0.2, 2, 3}, {0.3, 1, 2}};
        const auto bc = clusters::backward_cluster_of(log, 4, 1, 1.0);
        CHECK(bc.size() == 4);
    }
    SECTION("matches the literal reverse scan on random logs") {
        std::mt19937_64 rng(23);
        for (int trial = 0; trial < 8; ++trial) {
            const int n = 30;
            const auto log = random_log(rng, n, 80, 1.0);
            clusters::event_index index(log, n);
            for (double t : {0.25, 0.6, 1.0}) {
                for (std::int32_t tag = 1; tag <= n; ++tag) {
                    const auto fast = index.trace(tag, t);
                    const auto ref = reverse_scan_reference(log, tag, t);
                    REQUIRE(fast.members == ref);
                }
            }
        }
    }
    SECTION("backward cluster is contained in the t-cluster") {
        std::mt19937_64 rng(29);
        const int n = 50;
        const auto log = random_log(rng, n, 120, 1.0);
        auto part = clusters::build_partition(log, n, 1.0);
        clusters::event_index index(log, n);
        for (std::int32_t tag = 1; tag <= n; ++tag) {
            const auto bc = index.trace(tag, 1.0);
            const auto root = part.components().find(tag);
            for (const auto& [label, entry] : bc.members) {
                REQUIRE(part.components().find(label) == root);
            }
        }
    }
}

TEST_CASE("backward traces run concurrently over a shared log", "[clusters]") {
    std::mt19937_64 rng(37);
    const int n = 200;
    const auto log = random_log(rng, n, 500, 1.0);
    const clusters::event_index index(log, n);
    std::vector<std::size_t> serial(static_cast<std::size_t>(n) + 1);
    for (std::int32_t tag = 1; tag <= n; ++tag) {
        serial[static_cast<std::size_t>(tag)] = index.trace(tag, 1.0).size();
    }
    std::vector<std::size_t> parallel(static_cast<std::size_t>(n) + 1);
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w) {
        workers.emplace_back([&, w] {
            for (std::int32_t tag = 1 + w; tag <= n; tag += 4) {
                parallel[static_cast<std::size_t>(tag)] = index.trace(tag, 1.0).size();
            }
        });
    }
    for (auto& t : workers) t.join();
    CHECK(parallel == serial);
}

TEST_CASE("backward size histogram", "[clusters]") {
    SECTION("empty log puts all mass at size one") {
        const std::vector<pair_event> log;
        const auto hist = clusters::backward_size_fractions(log, 10, 1.0);
        REQUIRE(hist.size() == 1);
        CHECK(hist.at(1) == 1.0);
    }
    SECTION("fractions sum to one and size-1 bin counts collision-free particles") {
        std::mt19937_64 rng(31);
        const int n = 60;
        const auto log = random_log(rng, n, 50, 1.0);
        const auto hist = clusters::backward_size_fractions(log, n, 1.0);
        double sum = 0.0;
        for (const auto& [size, frac] : hist) sum += frac;
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));

        std::set<std::int32_t> collided;
        for (const auto& e : log) {
            collided.insert(e.i);
            collided.insert(e.j);
        }
        const double free_frac = static_cast<double>(n - collided.size()) / n;
        CHECK(hist.count(1) == (free_frac > 0.0 ? 1 : 0));
        if (free_frac > 0.0) CHECK(hist.at(1) == Catch::Approx(free_frac).epsilon(1e-12));
    }
}

TEST_CASE("distribution csv", "[clusters]") {
    const std::vector<pair_event> log{{0.1, 1, 2}, {0.2, 2, 3}};
    auto p = clusters::build_partition(log, 4, 1.0);
    auto d = clusters::measure_sizes(p);
    d.t = 1.0;
    std::ostringstream out;
    clusters::write_distribution_csv(out, std::span<const clusters::size_distribution>(&d, 1));
    CHECK(out.str() == "t,k,n,f_emp,g_emp\n1,1,1,0.25,0.5\n1,3,1,0.75,0.5\n");
}
