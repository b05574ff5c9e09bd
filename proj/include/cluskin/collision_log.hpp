#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cluskin {

/// Shortest round-trip decimal representation of a double. Used for all CSV
/// and JSON output so that re-running a tool on the same inputs is
/// byte-reproducible.
inline std::string format_double(double x) {
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

/// One logged simulation event. Pair events have j > 0 and, when the engine
/// tracks velocities, carry the scattering direction omega. Wall events have
/// j < 0 and never carry omega.
struct log_event {
    double t = 0.0;
    std::int32_t i = 0;   // 1-based particle label
    std::int32_t j = -1;  // partner label, -1 for wall events
    std::array<double, 3> omega{};
    std::int8_t omega_dim = 0;  // 0 when omega is absent

    bool is_pair() const { return j > 0; }

    friend bool operator==(const log_event&, const log_event&) = default;
};

/// Time-ordered event record. Pair events are the single source of truth for
/// all cluster statistics; wall events are bookkeeping only.
using collision_log = std::vector<log_event>;

inline std::size_t pair_event_count(const collision_log& log) {
    std::size_t n = 0;
    for (const auto& e : log) n += e.is_pair() ? 1 : 0;
    return n;
}

/// Writes one JSON object per line:
///   {"t":0.125,"type":"pair","i":3,"j":7,"omega":[0.6,-0.8]}
///   {"t":0.5,"type":"wall","i":2}
/// omega is omitted for pair events of engines that do not track velocities.
inline void write_jsonl(std::ostream& out, const collision_log& log) {
    std::string line;
    for (const auto& e : log) {
        line.clear();
        line += "{\"t\":";
        line += format_double(e.t);
        if (e.is_pair()) {
            line += ",\"type\":\"pair\",\"i\":";
            line += std::to_string(e.i);
            line += ",\"j\":";
            line += std::to_string(e.j);
            if (e.omega_dim > 0) {
                line += ",\"omega\":[";
                for (int d = 0; d < e.omega_dim; ++d) {
                    if (d) line += ',';
                    line += format_double(e.omega[static_cast<std::size_t>(d)]);
                }
                line += ']';
            }
        } else {
            line += ",\"type\":\"wall\",\"i\":";
            line += std::to_string(e.i);
        }
        line += "}\n";
        out << line;
    }
}

inline collision_log read_jsonl(std::istream& in) {
    collision_log log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        log_event e;
        e.t = j.at("t").get<double>();
        e.i = j.at("i").get<std::int32_t>();
        if (j.at("type").get<std::string>() == "pair") {
            e.j = j.at("j").get<std::int32_t>();
            if (j.contains("omega")) {
                const auto& arr = j.at("omega");
                if (arr.size() > 3) throw std::runtime_error("omega has more than 3 components");
                e.omega_dim = static_cast<std::int8_t>(arr.size());
                for (std::size_t d = 0; d < arr.size(); ++d) e.omega[d] = arr[d].get<double>();
            }
        } else {
            e.j = -1;
        }
        log.push_back(e);
    }
    return log;
}

}  // namespace cluskin
