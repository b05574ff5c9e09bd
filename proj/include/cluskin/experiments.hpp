#pragma once

// Experiment orchestration: seeded replica ensembles over the MD and DSMC
// engines, cluster-statistics extraction on a shared time grid, reproducible
// run directories, and theory-vs-simulation comparison reports.
//
// Run directory layout:
//   manifest.json               config echo, per-replica seeds and status
//   replica_XXX/log.jsonl       full event log of one replica
//   replica_XXX/distributions.csv  per-snapshot cluster size distributions
//   aggregate.csv               across-replica means and standard errors
//   largest.csv                 largest-cluster and cluster-count curves
//   comparison.csv, summary.csv written by the analyze step
//
// MD replicas are calibrated to kinetic time: the mean free time is measured
// on the window [0, 0.2 t_end] and snapshots are taken at physical time
// (grid value) * (mean free time), so every downstream comparison uses the
// same dimensionless clock as the closed forms.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cluskin/clusters.hpp"
#include "cluskin/collision_log.hpp"
#include "cluskin/dsmc.hpp"
#include "cluskin/kinetics.hpp"
#include "cluskin/md.hpp"
#include "cluskin/random.hpp"
#include "cluskin/trees.hpp"

namespace cluskin::experiments {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* worker_env_var = "CLUSKIN_WORKERS";
inline constexpr double md_calibration_window_fraction = 0.2;
inline constexpr double md_max_packing_fraction = 0.05;

enum class engine_kind { md, dsmc, predict };

inline std::string to_string(engine_kind e) {
    switch (e) {
        case engine_kind::md: return "md";
        case engine_kind::dsmc: return "dsmc";
        default: return "predict";
    }
}

struct md_params {
    std::int64_t n = 0;
    double epsilon = 0.0;
    int dim = 2;
    double t_end = 0.0;  // physical time horizon
    double temperature = 1.0;
    std::int64_t max_pair_events = 0;
};

struct dsmc_params {
    std::int64_t n = 0;
    double t_end = 0.0;  // kinetic time horizon
    int dim = 3;
    bool track_velocities = false;
    double temperature = 1.0;
    dsmc::scattering_law scattering{};
};

struct predict_params {
    std::int64_t k_max = 100;
};

struct experiment_config {
    engine_kind engine = engine_kind::predict;
    md_params md{};
    dsmc_params dsmc{};
    predict_params predict{};
    std::vector<double> time_grid;  // kinetic observation times
    int replicas = 1;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir;
};

inline void validate(const experiment_config& cfg) {
    if (cfg.replicas < 1) throw std::invalid_argument("replicas must be >= 1");
    if (cfg.time_grid.empty()) throw std::invalid_argument("time grid must be nonempty");
    for (std::size_t i = 0; i + 1 < cfg.time_grid.size(); ++i) {
        if (!(cfg.time_grid[i] < cfg.time_grid[i + 1])) {
            throw std::invalid_argument("time grid must be strictly increasing");
        }
    }
    if (!(cfg.time_grid.front() >= 0.0)) {
        throw std::invalid_argument("time grid entries must be nonnegative");
    }
    if (cfg.engine == engine_kind::md) {
        if (cfg.md.dim != 2 && cfg.md.dim != 3) throw std::invalid_argument("md dim must be 2 or 3");
        const double packing = cfg.md.dim == 2 ? md::config<2>{cfg.md.n, cfg.md.epsilon}.packing_fraction()
                                               : md::config<3>{cfg.md.n, cfg.md.epsilon}.packing_fraction();
        if (!(packing < md_max_packing_fraction)) {
            throw std::invalid_argument("packing fraction too high for a kinetic-regime run");
        }
    }
    if (cfg.engine == engine_kind::dsmc) {
        if (cfg.dsmc.dim != 2 && cfg.dsmc.dim != 3) {
            throw std::invalid_argument("dsmc dim must be 2 or 3");
        }
        if (cfg.dsmc.n < 2) throw std::invalid_argument("dsmc needs at least two particles");
    }
}

inline experiment_config parse_config(const nlohmann::json& j) {
    experiment_config cfg;
    const std::string engine = j.at("engine").get<std::string>();
    if (engine == "md") cfg.engine = engine_kind::md;
    else if (engine == "dsmc") cfg.engine = engine_kind::dsmc;
    else if (engine == "predict") cfg.engine = engine_kind::predict;
    else throw std::invalid_argument("engine must be md, dsmc or predict");

    if (j.contains("time_grid")) cfg.time_grid = j.at("time_grid").get<std::vector<double>>();
    if (j.contains("replicas")) cfg.replicas = j.at("replicas").get<int>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

    if (cfg.engine == engine_kind::md) {
        const auto& m = j.at("md");
        cfg.md.n = m.at("n").get<std::int64_t>();
        cfg.md.epsilon = m.at("epsilon").get<double>();
        cfg.md.t_end = m.at("t_end").get<double>();
        if (m.contains("dim")) cfg.md.dim = m.at("dim").get<int>();
        if (m.contains("temperature")) cfg.md.temperature = m.at("temperature").get<double>();
        if (m.contains("max_pair_events")) {
            cfg.md.max_pair_events = m.at("max_pair_events").get<std::int64_t>();
        }
    } else if (cfg.engine == engine_kind::dsmc) {
        const auto& m = j.at("dsmc");
        cfg.dsmc.n = m.at("n").get<std::int64_t>();
        cfg.dsmc.t_end = m.at("t_end").get<double>();
        if (m.contains("dim")) cfg.dsmc.dim = m.at("dim").get<int>();
        if (m.contains("track_velocities")) {
            cfg.dsmc.track_velocities = m.at("track_velocities").get<bool>();
        }
        if (m.contains("temperature")) cfg.dsmc.temperature = m.at("temperature").get<double>();
        if (m.contains("scattering")) {
            const auto& s = m.at("scattering");
            if (s.is_string()) {
                if (s.get<std::string>() != "isotropic") {
                    throw std::invalid_argument("scattering must be \"isotropic\" or a table");
                }
            } else {
                cfg.dsmc.scattering = dsmc::scattering_law::from_table(
                    s.at("cos_nodes").get<std::vector<double>>(),
                    s.at("density").get<std::vector<double>>());
            }
        }
    } else if (j.contains("predict")) {
        cfg.predict.k_max = j.at("predict").at("k_max").get<std::int64_t>();
    }
    validate(cfg);
    return cfg;
}

inline experiment_config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    nlohmann::json j;
    in >> j;
    return parse_config(j);
}

inline nlohmann::json config_to_json(const experiment_config& cfg) {
    nlohmann::json j;
    j["engine"] = to_string(cfg.engine);
    j["time_grid"] = cfg.time_grid;
    j["replicas"] = cfg.replicas;
    j["master_seed"] = cfg.master_seed;
    j["output_dir"] = cfg.output_dir.string();
    if (cfg.engine == engine_kind::md) {
        j["md"] = {{"n", cfg.md.n},
                   {"epsilon", cfg.md.epsilon},
                   {"dim", cfg.md.dim},
                   {"t_end", cfg.md.t_end},
                   {"temperature", cfg.md.temperature},
                   {"max_pair_events", cfg.md.max_pair_events}};
    } else if (cfg.engine == engine_kind::dsmc) {
        j["dsmc"] = {{"n", cfg.dsmc.n},
                     {"t_end", cfg.dsmc.t_end},
                     {"dim", cfg.dsmc.dim},
                     {"track_velocities", cfg.dsmc.track_velocities},
                     {"temperature", cfg.dsmc.temperature}};
        if (cfg.dsmc.scattering.type == dsmc::scattering_law::kind::isotropic_hemisphere) {
            j["dsmc"]["scattering"] = "isotropic";
        } else {
            j["dsmc"]["scattering"] = {{"cos_nodes", cfg.dsmc.scattering.cos_nodes},
                                       {"density", cfg.dsmc.scattering.density}};
        }
    } else {
        j["predict"] = {{"k_max", cfg.predict.k_max}};
    }
    return j;
}

/// Worker-pool size: explicit request, else the CLUSKIN_WORKERS environment
/// variable, else hardware concurrency; always capped by the replica count.
inline int worker_count(int requested, int replicas) {
    int w = requested;
    if (w <= 0) {
        if (const char* env = std::getenv(worker_env_var)) w = std::atoi(env);
    }
    if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
    if (w <= 0) w = 1;
    return std::max(1, std::min(w, replicas));
}

struct replica_result {
    int index = -1;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double mean_free_time = 0.0;  // md only
    std::int64_t pair_events = 0;
    std::int64_t wall_events = 0;
    std::vector<clusters::size_distribution> snapshots;  // one per reachable grid time
};

namespace detail {

inline std::string replica_dir_name(int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "replica_%03d", index);
    return buf;
}

template <int Dim>
replica_result run_md_replica(const experiment_config& cfg, int index) {
    replica_result r;
    r.index = index;
    r.seed = replica_seed(cfg.master_seed, index);
    md::config<Dim> mc;
    mc.n = cfg.md.n;
    mc.epsilon = cfg.md.epsilon;
    mc.seed = r.seed;
    mc.t_end = cfg.md.t_end;
    mc.temperature = cfg.md.temperature;
    mc.max_pair_events = cfg.md.max_pair_events;
    md::simulation<Dim> sim(mc);
    sim.run();
    r.pair_events = sim.pair_event_count();
    r.wall_events = sim.wall_event_count();
    r.mean_free_time = md::measure_mean_free_time(
        sim.log(), cfg.md.n, 0.0, md_calibration_window_fraction * cfg.md.t_end);

    const auto events = clusters::extract_pair_events(sim.log());
    clusters::cluster_partition part(cfg.md.n);
    for (double t_kin : cfg.time_grid) {
        const double t_phys = t_kin * r.mean_free_time;
        if (t_phys > sim.time()) break;  // grid point beyond the run horizon
        part.advance(events, t_phys);
        auto d = clusters::measure_sizes(part);
        d.t = t_kin;  // snapshots are labelled in kinetic time
        r.snapshots.push_back(std::move(d));
    }

    std::ofstream out(cfg.output_dir / replica_dir_name(index) / "log.jsonl");
    write_jsonl(out, sim.log());
    r.ok = true;
    return r;
}

template <int Dim>
replica_result run_dsmc_replica(const experiment_config& cfg, int index) {
    replica_result r;
    r.index = index;
    r.seed = replica_seed(cfg.master_seed, index);
    dsmc::config dc;
    dc.n = cfg.dsmc.n;
    dc.seed = r.seed;
    dc.t_end = cfg.dsmc.t_end;
    dc.scattering = cfg.dsmc.scattering;
    dc.track_velocities = cfg.dsmc.track_velocities;
    dc.temperature = cfg.dsmc.temperature;
    dsmc::simulation<Dim> sim(dc);
    sim.run();
    r.pair_events = static_cast<std::int64_t>(sim.log().size());

    const auto events = clusters::extract_pair_events(sim.log());
    clusters::cluster_partition part(cfg.dsmc.n);
    for (double t : cfg.time_grid) {
        if (t > cfg.dsmc.t_end) break;
        part.advance(events, t);
        r.snapshots.push_back(clusters::measure_sizes(part));
        r.snapshots.back().t = t;
    }

    std::ofstream out(cfg.output_dir / replica_dir_name(index) / "log.jsonl");
    write_jsonl(out, sim.log());
    r.ok = true;
    return r;
}

struct stats {
    double mean = 0.0;
    double se = 0.0;
};

inline stats mean_se(const std::vector<double>& xs) {
    stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) /
                         static_cast<double>(xs.size()));
    }
    return s;
}

}  // namespace detail

/// One aggregated (t, k) cell of an ensemble.
struct aggregate_cell {
    double t = 0.0;
    std::int64_t k = 0;
    int replicas = 0;
    detail::stats n, f, g;
};

/// Per-time ensemble curve: largest-cluster mass fraction and cluster count.
struct time_curve {
    double t = 0.0;
    int replicas = 0;
    detail::stats largest_mass;
    detail::stats cluster_count;
};

inline std::vector<aggregate_cell> aggregate_cells(
    const std::vector<const std::vector<clusters::size_distribution>*>& replicas) {
    std::map<double, std::vector<const clusters::size_distribution*>> by_time;
    for (const auto* snaps : replicas) {
        for (const auto& d : *snaps) by_time[d.t].push_back(&d);
    }
    std::vector<aggregate_cell> cells;
    for (const auto& [t, dists] : by_time) {
        std::set<std::int64_t> ks;
        for (const auto* d : dists) {
            for (const auto& [k, n] : d->counts) ks.insert(k);
        }
        for (const std::int64_t k : ks) {
            aggregate_cell cell;
            cell.t = t;
            cell.k = k;
            cell.replicas = static_cast<int>(dists.size());
            std::vector<double> ns, fs, gs;
            for (const auto* d : dists) {
                const auto it = d->counts.find(k);
                const double n = it == d->counts.end() ? 0.0 : static_cast<double>(it->second);
                ns.push_back(n);
                fs.push_back(d->mass_fraction(k));
                gs.push_back(d->cluster_fraction(k));
            }
            cell.n = detail::mean_se(ns);
            cell.f = detail::mean_se(fs);
            cell.g = detail::mean_se(gs);
            cells.push_back(cell);
        }
    }
    return cells;
}

inline std::vector<time_curve> aggregate_curves(
    const std::vector<const std::vector<clusters::size_distribution>*>& replicas) {
    std::map<double, std::vector<const clusters::size_distribution*>> by_time;
    for (const auto* snaps : replicas) {
        for (const auto& d : *snaps) by_time[d.t].push_back(&d);
    }
    std::vector<time_curve> curves;
    for (const auto& [t, dists] : by_time) {
        time_curve c;
        c.t = t;
        c.replicas = static_cast<int>(dists.size());
        std::vector<double> largest, counts;
        for (const auto* d : dists) {
            largest.push_back(d->largest_mass_fraction());
            counts.push_back(static_cast<double>(d->n_clusters));
        }
        c.largest_mass = detail::mean_se(largest);
        c.cluster_count = detail::mean_se(counts);
        curves.push_back(c);
    }
    return curves;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<aggregate_cell>& cells) {
    out << "t,k,replicas,n_mean,n_se,f_mean,f_se,g_mean,g_se\n";
    for (const auto& c : cells) {
        out << format_double(c.t) << ',' << c.k << ',' << c.replicas << ','
            << format_double(c.n.mean) << ',' << format_double(c.n.se) << ','
            << format_double(c.f.mean) << ',' << format_double(c.f.se) << ','
            << format_double(c.g.mean) << ',' << format_double(c.g.se) << '\n';
    }
}

inline void write_curves_csv(std::ostream& out, const std::vector<time_curve>& curves) {
    out << "t,replicas,largest_mass_mean,largest_mass_se,clusters_mean,clusters_se\n";
    for (const auto& c : curves) {
        out << format_double(c.t) << ',' << c.replicas << ','
            << format_double(c.largest_mass.mean) << ',' << format_double(c.largest_mass.se) << ','
            << format_double(c.cluster_count.mean) << ',' << format_double(c.cluster_count.se)
            << '\n';
    }
}

struct run_summary {
    std::filesystem::path dir;
    int replicas = 0;
    int failed = 0;
    std::vector<replica_result> results;
};

/// Runs the configured ensemble: replicas execute concurrently on a bounded
/// worker pool with seeds derived from the master seed, each owning its
/// engine instance and output files; aggregation is a sequential reduce over
/// the replica results. The whole pipeline is deterministic for a fixed
/// master seed, independent of the worker count.
inline run_summary run_experiment(const experiment_config& cfg, int workers = 0) {
    validate(cfg);
    if (cfg.engine == engine_kind::predict) {
        throw std::invalid_argument("predict has no ensemble; use the prediction tables");
    }
    if (cfg.output_dir.empty()) throw std::invalid_argument("output_dir is required");
    std::filesystem::create_directories(cfg.output_dir);
    for (int i = 0; i < cfg.replicas; ++i) {
        std::filesystem::create_directories(cfg.output_dir / detail::replica_dir_name(i));
    }

    std::vector<replica_result> results(static_cast<std::size_t>(cfg.replicas));
    std::atomic<int> next{0};
    const int pool = worker_count(workers, cfg.replicas);
    auto work = [&]() {
        while (true) {
            const int idx = next.fetch_add(1);
            if (idx >= cfg.replicas) return;
            replica_result r;
            try {
                if (cfg.engine == engine_kind::md) {
                    r = cfg.md.dim == 2 ? detail::run_md_replica<2>(cfg, idx)
                                        : detail::run_md_replica<3>(cfg, idx);
                } else {
                    r = cfg.dsmc.dim == 2 ? detail::run_dsmc_replica<2>(cfg, idx)
                                          : detail::run_dsmc_replica<3>(cfg, idx);
                }
            } catch (const std::exception& e) {
                r.index = idx;
                r.seed = replica_seed(cfg.master_seed, idx);
                r.ok = false;
                r.error = e.what();
            }
            results[static_cast<std::size_t>(idx)] = std::move(r);
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int w = 0; w < pool; ++w) threads.emplace_back(work);
    for (auto& th : threads) th.join();

    run_summary summary;
    summary.dir = cfg.output_dir;
    summary.replicas = cfg.replicas;

    std::vector<const std::vector<clusters::size_distribution>*> snapshot_ptrs;
    for (const auto& r : results) {
        if (!r.ok) {
            ++summary.failed;
            continue;
        }
        snapshot_ptrs.push_back(&r.snapshots);
        std::ofstream out(cfg.output_dir / detail::replica_dir_name(r.index) /
                          "distributions.csv");
        clusters::write_distribution_csv(out, r.snapshots);
    }
    {
        std::ofstream out(cfg.output_dir / "aggregate.csv");
        write_aggregate_csv(out, aggregate_cells(snapshot_ptrs));
    }
    {
        std::ofstream out(cfg.output_dir / "largest.csv");
        write_curves_csv(out, aggregate_curves(snapshot_ptrs));
    }

    nlohmann::json manifest;
    manifest["tool"] = "cluskin";
    manifest["version"] = tool_version;
    manifest["config"] = config_to_json(cfg);
    manifest["replicas"] = cfg.replicas;
    manifest["failed"] = summary.failed;
    manifest["partial"] = summary.failed > 0;
    nlohmann::json res = nlohmann::json::array();
    double mft_sum = 0.0;
    int mft_count = 0;
    for (const auto& r : results) {
        nlohmann::json rj;
        rj["index"] = r.index;
        rj["seed"] = r.seed;
        rj["ok"] = r.ok;
        rj["pair_events"] = r.pair_events;
        rj["wall_events"] = r.wall_events;
        rj["snapshots"] = r.snapshots.size();
        if (!r.ok) rj["error"] = r.error;
        if (cfg.engine == engine_kind::md && r.ok) {
            rj["mean_free_time"] = r.mean_free_time;
            mft_sum += r.mean_free_time;
            ++mft_count;
        }
        res.push_back(rj);
    }
    manifest["results"] = res;
    if (cfg.engine == engine_kind::md) {
        manifest["md_calibration"] = {
            {"window", {0.0, md_calibration_window_fraction * cfg.md.t_end}},
            {"mean_free_time_mean", mft_count > 0 ? mft_sum / mft_count : 0.0},
            {"boltzmann_grad_parameter",
             static_cast<double>(cfg.md.n) * std::pow(cfg.md.epsilon, cfg.md.dim - 1)},
            {"packing_fraction",
             cfg.md.dim == 2 ? md::config<2>{cfg.md.n, cfg.md.epsilon}.packing_fraction()
                             : md::config<3>{cfg.md.n, cfg.md.epsilon}.packing_fraction()}};
    }
    {
        std::ofstream out(cfg.output_dir / "manifest.json");
        out << manifest.dump(2) << '\n';
    }

    summary.results = std::move(results);
    return summary;
}

/// Emits the analytic prediction tables (one row per (t, k) and one scalar
/// row per t, with declared tail bounds). A series-policy failure at some t
/// only blanks the cells that depend on the failed sum (written as nan); the
/// mass column and the damping scale have closed forms and always fill.
inline void write_prediction_tables(std::ostream& distributions, std::ostream& scalars,
                                    const std::vector<double>& t_grid, std::int64_t k_max,
                                    const kinetics::series_policy& policy = {}) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    distributions << "t,k,f_pred,g_pred\n";
    scalars << "t,z,z_tail_bound,f_total,f_total_tail_bound,giant,gamma,g_deficit_bound\n";
    for (double t : t_grid) {
        kinetics::analytic_distribution d;
        bool series_ok = true;
        try {
            d = kinetics::evaluate_distribution(t, k_max, policy);
        } catch (const kinetics::series_error&) {
            series_ok = false;
            d.t = t;
            d.z = d.z_tail_bound = d.total = d.total_tail_bound = d.giant = nan;
            d.fraction_deficit_bound = nan;
            d.gamma = t > 0.0 ? kinetics::damping_scale(t) : 0.0;
        }
        for (std::int64_t k = 1; k <= k_max; ++k) {
            distributions << format_double(t) << ',' << k << ','
                          << format_double(series_ok ? d.mass[static_cast<std::size_t>(k - 1)]
                                                     : kinetics::mass_fraction(k, t))
                          << ','
                          << format_double(series_ok ? d.fraction[static_cast<std::size_t>(k - 1)]
                                                     : nan)
                          << '\n';
        }
        scalars << format_double(t) << ',' << format_double(d.z) << ','
                << format_double(d.z_tail_bound) << ',' << format_double(d.total) << ','
                << format_double(d.total_tail_bound) << ',' << format_double(d.giant) << ','
                << format_double(d.gamma) << ',' << format_double(d.fraction_deficit_bound)
                << '\n';
    }
}

/// One row of the theory-vs-simulation table.
struct comparison_cell {
    double t = 0.0;
    std::int64_t k = 0;
    int replicas = 0;
    detail::stats n, f, g;
    double f_pred = 0.0;
    double g_pred = 0.0;
    std::optional<double> z;  // present only where the empirical SE is positive
};

struct time_summary {
    double t = 0.0;
    int replicas = 0;
    std::optional<kinetics::power_law_fit> fit;  // fit of the empirical g over the option range
    detail::stats largest_mass;
    detail::stats cluster_count;
    double giant_pred = 0.0;
    double z_pred = 0.0;
    double total_pred = 0.0;
    double gamma_pred = 0.0;
};

struct analysis_report {
    engine_kind engine = engine_kind::dsmc;
    double calibration_mft = 0.0;  // md only: mean measured mean free time
    std::vector<comparison_cell> cells;
    std::vector<time_summary> summaries;
};

struct analysis_options {
    std::int64_t fit_kmin = 5;
    std::int64_t fit_kmax = 50;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::vector<clusters::size_distribution> read_distribution_csv(
    const std::filesystem::path& path, std::int64_t n_particles) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing distribution file " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::map<double, clusters::size_distribution> by_t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 5) throw std::runtime_error("malformed distribution row");
        const double t = std::stod(fields[0]);
        auto& d = by_t[t];
        d.t = t;
        d.n_particles = n_particles;
        const auto k = static_cast<std::int64_t>(std::stoll(fields[1]));
        const auto n = static_cast<std::int64_t>(std::stoll(fields[2]));
        d.counts[k] = n;
    }
    std::vector<clusters::size_distribution> out;
    for (auto& [t, d] : by_t) {
        d.n_clusters = 0;
        for (const auto& [k, n] : d.counts) d.n_clusters += n;
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace detail

/// Rebuilds the ensemble statistics from the per-replica files of a run
/// directory and compares them against the analytic predictions. Pure
/// function of the directory contents, so re-running is bit-reproducible.
inline analysis_report analyze_run(const std::filesystem::path& run_dir,
                                   const analysis_options& options = {},
                                   const kinetics::series_policy& policy = {}) {
    std::ifstream min(run_dir / "manifest.json");
    if (!min) throw std::runtime_error("missing manifest.json in " + run_dir.string());
    nlohmann::json manifest;
    min >> manifest;

    analysis_report report;
    const auto cfg = parse_config(manifest.at("config"));
    report.engine = cfg.engine;
    const std::int64_t n_particles =
        cfg.engine == engine_kind::md ? cfg.md.n : cfg.dsmc.n;
    if (cfg.engine == engine_kind::md) {
        report.calibration_mft =
            manifest.at("md_calibration").at("mean_free_time_mean").get<double>();
    }

    std::vector<std::vector<clusters::size_distribution>> replica_snapshots;
    for (const auto& rj : manifest.at("results")) {
        if (!rj.at("ok").get<bool>()) continue;  // failed replicas are flagged, not aggregated
        const int index = rj.at("index").get<int>();
        replica_snapshots.push_back(detail::read_distribution_csv(
            run_dir / detail::replica_dir_name(index) / "distributions.csv", n_particles));
    }
    if (replica_snapshots.empty()) throw std::runtime_error("run directory has no usable replicas");

    std::vector<const std::vector<clusters::size_distribution>*> ptrs;
    ptrs.reserve(replica_snapshots.size());
    for (const auto& s : replica_snapshots) ptrs.push_back(&s);
    const auto cells = aggregate_cells(ptrs);
    const auto curves = aggregate_curves(ptrs);

    std::map<double, double> z_by_t;
    for (const auto& c : cells) {
        if (z_by_t.count(c.t) == 0) {
            z_by_t[c.t] = kinetics::partition_function(c.t, policy).value;
        }
        comparison_cell cc;
        cc.t = c.t;
        cc.k = c.k;
        cc.replicas = c.replicas;
        cc.n = c.n;
        cc.f = c.f;
        cc.g = c.g;
        cc.f_pred = kinetics::mass_fraction(c.k, c.t);
        cc.g_pred = kinetics::cluster_weight(c.k, c.t) / z_by_t[c.t];
        if (c.f.se > 0.0) cc.z = (c.f.mean - cc.f_pred) / c.f.se;
        report.cells.push_back(cc);
    }

    for (const auto& curve : curves) {
        time_summary s;
        s.t = curve.t;
        s.replicas = curve.replicas;
        s.largest_mass = curve.largest_mass;
        s.cluster_count = curve.cluster_count;
        s.z_pred = z_by_t.count(curve.t) ? z_by_t[curve.t]
                                         : kinetics::partition_function(curve.t, policy).value;
        s.total_pred = kinetics::total_mass(curve.t, policy).value;
        s.giant_pred = 1.0 - s.total_pred;
        s.gamma_pred = curve.t > 0.0 ? kinetics::damping_scale(curve.t) : 0.0;

        std::map<std::int64_t, double> g_emp;
        for (const auto& c : report.cells) {
            if (c.t == curve.t && c.g.mean > 0.0) g_emp[c.k] = c.g.mean;
        }
        try {
            s.fit = kinetics::fit_power_law(g_emp, options.fit_kmin, options.fit_kmax);
        } catch (const std::exception&) {
            // insufficient support on the fit range; reported as an empty fit
        }
        report.summaries.push_back(s);
    }

    {
        std::ofstream out(run_dir / "comparison.csv");
        out << "t,k,n_mean,n_se,f_emp,f_pred,g_emp,g_pred,z\n";
        for (const auto& c : report.cells) {
            out << format_double(c.t) << ',' << c.k << ',' << format_double(c.n.mean) << ','
                << format_double(c.n.se) << ',' << format_double(c.f.mean) << ','
                << format_double(c.f_pred) << ',' << format_double(c.g.mean) << ','
                << format_double(c.g_pred) << ',' << (c.z ? format_double(*c.z) : std::string())
                << '\n';
        }
    }
    {
        std::ofstream out(run_dir / "summary.csv");
        out << "t,replicas,alpha,damping_rate,fit_residual,largest_mass_mean,largest_mass_se,"
               "clusters_mean,clusters_se,z_pred,f_total_pred,giant_pred,gamma_pred\n";
        for (const auto& s : report.summaries) {
            out << format_double(s.t) << ',' << s.replicas << ','
                << (s.fit ? format_double(s.fit->exponent) : std::string()) << ','
                << (s.fit ? format_double(s.fit->damping_rate) : std::string()) << ','
                << (s.fit ? format_double(s.fit->residual) : std::string()) << ','
                << format_double(s.largest_mass.mean) << ',' << format_double(s.largest_mass.se)
                << ',' << format_double(s.cluster_count.mean) << ','
                << format_double(s.cluster_count.se) << ',' << format_double(s.z_pred) << ','
                << format_double(s.total_pred) << ',' << format_double(s.giant_pred) << ','
                << format_double(s.gamma_pred) << '\n';
        }
    }
    return report;
}

/// Oracle self-test: combinatorial counts, the brute-force quadrature oracle
/// against the closed form, and the conjugate-point solver residuals.
/// Returns the number of failed checks and prints one line per check.
inline int selfcheck(std::ostream& out) {
    int failures = 0;
    auto report = [&](bool ok, const std::string& name, const std::string& detail) {
        out << (ok ? "[ ok ] " : "[fail] ") << name << ": " << detail << '\n';
        if (!ok) ++failures;
    };

    {
        bool ok = true;
        std::string detail;
        for (int k = 1; k <= 8; ++k) {
            std::uint64_t count = 0;
            trees::for_each_labelled_tree(k, [&](const trees::labelled_tree&) { ++count; });
            if (count != trees::cayley_count(k)) {
                ok = false;
                detail = "k=" + std::to_string(k) + " enumerated " + std::to_string(count);
                break;
            }
        }
        if (ok) detail = "tree counts match k^{k-2} for k <= 8";
        report(ok, "cayley-counts", detail);
    }
    {
        bool ok = true;
        std::string detail = "encode(decode(code)) == code for all codes, k <= 7";
        for (int k = 3; k <= 7 && ok; ++k) {
            trees::for_each_labelled_tree(k, [&](const trees::labelled_tree& t) {
                const auto code = trees::pruefer_encode(t);
                if (trees::pruefer_decode(code, k) != t) ok = false;
            });
        }
        if (!ok) detail = "round trip failed";
        report(ok, "pruefer-bijection", detail);
    }
    {
        bool ok = true;
        double worst = 0.0;
        for (int k = 2; k <= 4; ++k) {
            for (double t : {0.3, 1.0, 2.0}) {
                const double oracle = trees::quadrature_mass_oracle(k, t);
                const double closed = kinetics::mass_fraction(k, t);
                worst = std::max(worst, std::abs(oracle / closed - 1.0));
            }
        }
        ok = worst < 1e-6;
        report(ok, "quadrature-oracle",
               "max relative deviation from the closed form " + format_double(worst));
    }
    {
        double worst = 0.0;
        for (double t = 1.1; t <= 20.0; t += 0.1) {
            const auto sol = kinetics::solve_conjugate(t);
            worst = std::max(worst, std::abs(sol.t_star * std::exp(-sol.t_star) -
                                             t * std::exp(-t)));
        }
        report(worst < 1e-12, "conjugate-residuals",
               "max defect of t* e^{-t*} = t e^{-t} is " + format_double(worst));
    }
    {
        double worst = 0.0;
        const auto policy = kinetics::series_policy::direct(1'000'000, 1e-9);
        for (double t : {0.2, 0.5, 0.8, 1.2, 2.0, 3.0}) {
            const auto direct = kinetics::total_mass(t, policy);
            const auto ident = kinetics::total_mass(t, kinetics::series_policy::identity());
            const double gap = std::abs(direct.value - ident.value);
            // 1e-13 of slack for summation roundoff, which the truncation
            // bound does not cover.
            worst = std::max(worst, gap - direct.tail_bound - 1e-13);
        }
        report(worst <= 0.0, "series-identity",
               "direct sums agree with the closed form within their tail bounds");
    }
    return failures;
}

}  // namespace cluskin::experiments
