#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftwatch/rates.hpp"
#include "driftwatch/rng.hpp"

// Synthetic label/prediction streams.
//
// A concept is a joint distribution over (predicted, actual) label pairs,
// written as a 2x2 probability matrix in the same [predicted][actual]
// layout as ConfusionCounts. A stream is a seeded sequence of concepts;
// switching concepts is what the detectors are supposed to notice.

namespace driftwatch {

struct ConfusionSpec {
    /// cell[predicted][actual] joint probabilities;
    /// cell[0][0] TN, cell[0][1] FN, cell[1][0] FP, cell[1][1] TP.
    double cell[2][2] = {{0.25, 0.25}, {0.25, 0.25}};

    void validate() const {
        double sum = 0.0;
        for (const auto& row : cell)
            for (double v : row) {
                if (!(v >= 0.0))
                    throw std::invalid_argument(
                        "ConfusionSpec: cell probabilities must be >= 0");
                sum += v;
            }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument(
                "ConfusionSpec: cell probabilities must sum to 1 (got " +
                std::to_string(sum) + ")");
    }

    /// Steady-state value of a monitored rate under this concept.
    double rate(RateKind k) const {
        switch (k) {
            case RateKind::tpr: return cell[1][1] / (cell[0][1] + cell[1][1]);
            case RateKind::tnr: return cell[0][0] / (cell[0][0] + cell[1][0]);
            case RateKind::ppv: return cell[1][1] / (cell[1][0] + cell[1][1]);
            default: return cell[0][0] / (cell[0][0] + cell[0][1]);
        }
    }

    double positive_rate() const { return cell[0][1] + cell[1][1]; }
    double accuracy() const { return cell[0][0] + cell[1][1]; }
};

struct ConceptSpec {
    ConfusionSpec matrix;
    std::uint64_t length = 0;
};

struct StreamConfig {
    std::vector<ConceptSpec> concepts;
    std::uint64_t seed = 1;

    void validate() const {
        if (concepts.empty())
            throw std::invalid_argument("StreamConfig: at least one concept required");
        for (const auto& c : concepts) {
            c.matrix.validate();
            if (c.length < 1)
                throw std::invalid_argument("StreamConfig: concept length must be >= 1");
        }
    }

    std::uint64_t total_length() const {
        std::uint64_t total = 0;
        for (const auto& c : concepts) total += c.length;
        return total;
    }
};

/// First step of each concept after the first, i.e. the moments the
/// detectors should flag. 1-based, like stream time.
inline std::vector<std::uint64_t> drift_times(const StreamConfig& config) {
    std::vector<std::uint64_t> times;
    std::uint64_t elapsed = 0;
    for (std::size_t i = 0; i + 1 < config.concepts.size(); ++i) {
        elapsed += config.concepts[i].length;
        times.push_back(elapsed + 1);
    }
    return times;
}

struct StreamRecord {
    std::uint64_t t = 0;
    std::uint8_t y = 0;
    std::uint8_t yhat = 0;

    bool operator==(const StreamRecord&) const = default;
};

/// One (y, yhat) draw from a concept. A single uniform variate is mapped
/// through the cells in the fixed order TN, FN, FP, TP, so a stream is
/// reproducible from its seed alone.
inline std::pair<int, int> sample_pair(const ConfusionSpec& spec, Xoshiro256pp& rng) {
    const double u = rng.next_double();
    double acc = spec.cell[0][0];
    if (u < acc) return {0, 0};
    acc += spec.cell[0][1];
    if (u < acc) return {1, 0};
    acc += spec.cell[1][0];
    if (u < acc) return {0, 1};
    return {1, 1};
}

inline std::vector<StreamRecord> generate_stream(const StreamConfig& config) {
    config.validate();
    std::vector<StreamRecord> records;
    records.reserve(config.total_length());
    Xoshiro256pp rng(config.seed);
    std::uint64_t t = 0;
    for (const auto& concept_spec : config.concepts) {
        for (std::uint64_t i = 0; i < concept_spec.length; ++i) {
            const auto [y, yhat] = sample_pair(concept_spec.matrix, rng);
            records.push_back({++t, static_cast<std::uint8_t>(y),
                               static_cast<std::uint8_t>(yhat)});
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Named scenarios.
// ---------------------------------------------------------------------------

struct Scenario {
    std::string name;
    ConfusionSpec before;
    ConfusionSpec after;
    std::string note;
};

/// The stock abrupt-drift scenarios. Both Imbalance3 variants are kept:
/// the plain one reproduces a legacy parameter set whose two matrices are
/// identical (the stream never actually drifts); the "-fixed" variant is
/// a corrected second half matching that scenario's intent.
inline const std::vector<Scenario>& builtin_scenarios() {
    static const std::vector<Scenario> scenarios = [] {
        const double third = 1.0 / 3.0, sixth = 1.0 / 6.0;
        std::vector<Scenario> list;
        list.push_back({"Balance1",
                        {{{0.4, 0.1}, {0.1, 0.4}}},
                        {{{0.3, 0.1}, {0.2, 0.4}}},
                        "balanced classes; tnr, ppv and npv degrade"});
        list.push_back({"Balance2",
                        {{{0.35, 0.05}, {0.15, 0.45}}},
                        {{{0.4, 0.1}, {0.1, 0.4}}},
                        "balanced classes; small shifts in all four rates"});
        list.push_back({"Balance3",
                        {{{0.3, 0.2}, {0.2, 0.3}}},
                        {{{0.4, 0.2}, {0.1, 0.3}}},
                        "balanced classes; tnr, ppv and npv improve"});
        list.push_back({"Imbalance1",
                        {{{third, sixth}, {sixth, third}}},
                        {{{13.0 / 15.0, 1.0 / 30.0}, {1.0 / 30.0, 1.0 / 15.0}}},
                        "class ratio flips from balanced to 9:1"});
        list.push_back({"Imbalance2",
                        {{{0.65, 0.05}, {0.15, 0.15}}},
                        {{{0.75, 0.15}, {0.05, 0.05}}},
                        "imbalanced classes; tpr and ppv collapse"});
        list.push_back({"Imbalance3",
                        {{{0.6, 0.15}, {0.15, 0.1}}},
                        {{{0.6, 0.15}, {0.15, 0.1}}},
                        "legacy parameter set kept verbatim; both halves are "
                        "identical, so the stream never drifts"});
        list.push_back({"Imbalance3-fixed",
                        {{{0.6, 0.15}, {0.15, 0.1}}},
                        {{{0.55, 0.20}, {0.20, 0.05}}},
                        "corrected second half (not part of the legacy set): class "
                        "ratio unchanged, tpr, ppv and accuracy degrade"});
        for (auto& s : list) {
            s.before.validate();
            s.after.validate();
        }
        return list;
    }();
    return scenarios;
}

inline const Scenario& find_scenario(std::string_view name) {
    for (const auto& s : builtin_scenarios())
        if (s.name == name) return s;
    std::string known;
    for (const auto& s : builtin_scenarios()) {
        if (!known.empty()) known += ", ";
        known += s.name;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(name) +
                                "' (known: " + known + ")");
}

/// Two equal halves (first gets the rounding slack), drift at
/// total_length / 2 + 1.
inline StreamConfig make_drift_config(const Scenario& scenario,
                                      std::uint64_t total_length,
                                      std::uint64_t seed) {
    if (total_length < 2)
        throw std::invalid_argument("make_drift_config: total_length must be >= 2");
    StreamConfig config;
    const std::uint64_t first = total_length / 2;
    config.concepts.push_back({scenario.before, first});
    config.concepts.push_back({scenario.after, total_length - first});
    config.seed = seed;
    return config;
}

inline StreamConfig make_stable_config(const ConfusionSpec& matrix,
                                       std::uint64_t length, std::uint64_t seed) {
    StreamConfig config;
    config.concepts.push_back({matrix, length});
    config.seed = seed;
    return config;
}

// ---------------------------------------------------------------------------
// Stream files: CSV of (t, y, yhat) plus a JSON sidecar describing how
// the stream was produced (enough to regenerate it exactly).
// ---------------------------------------------------------------------------

struct StreamMeta {
    StreamConfig config;
    /// Scenario the config came from, empty for custom configs.
    std::string scenario;
};

inline void write_stream_csv(const std::vector<StreamRecord>& records,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "t,y,yhat\n";
    for (const auto& r : records)
        out << r.t << ',' << static_cast<int>(r.y) << ',' << static_cast<int>(r.yhat)
            << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<StreamRecord> read_stream_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "t,y,yhat")
        throw std::runtime_error("stream csv: bad header in " + path.string());
    std::vector<StreamRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        StreamRecord r;
        unsigned long long t = 0;
        int y = -1, yhat = -1;
        if (std::sscanf(line.c_str(), "%llu,%d,%d", &t, &y, &yhat) != 3 ||
            (y != 0 && y != 1) || (yhat != 0 && yhat != 1))
            throw std::runtime_error("stream csv: bad row '" + line + "'");
        r.t = t;
        r.y = static_cast<std::uint8_t>(y);
        r.yhat = static_cast<std::uint8_t>(yhat);
        records.push_back(r);
    }
    return records;
}

inline nlohmann::json stream_meta_to_json(const StreamMeta& meta) {
    nlohmann::json j;
    j["schema"] = "driftwatch-stream/1";
    if (!meta.scenario.empty()) j["scenario"] = meta.scenario;
    j["seed"] = meta.config.seed;
    j["length"] = meta.config.total_length();
    j["drift_times"] = drift_times(meta.config);
    nlohmann::json concepts = nlohmann::json::array();
    for (const auto& c : meta.config.concepts) {
        nlohmann::json jc;
        jc["length"] = c.length;
        jc["matrix"] = {{c.matrix.cell[0][0], c.matrix.cell[0][1]},
                        {c.matrix.cell[1][0], c.matrix.cell[1][1]}};
        concepts.push_back(jc);
    }
    j["concepts"] = concepts;
    return j;
}

inline StreamMeta stream_meta_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j.at("schema") != "driftwatch-stream/1")
        throw std::runtime_error("stream sidecar: unknown schema");
    StreamMeta meta;
    meta.config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("scenario")) meta.scenario = j.at("scenario").get<std::string>();
    for (const auto& jc : j.at("concepts")) {
        ConceptSpec c;
        c.length = jc.at("length").get<std::uint64_t>();
        const auto& m = jc.at("matrix");
        for (int pred = 0; pred < 2; ++pred)
            for (int act = 0; act < 2; ++act)
                c.matrix.cell[pred][act] = m.at(pred).at(act).get<double>();
        meta.config.concepts.push_back(c);
    }
    meta.config.validate();
    return meta;
}

inline void write_stream_sidecar(const StreamMeta& meta,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << stream_meta_to_json(meta).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline StreamMeta read_stream_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return stream_meta_from_json(j);
}

} // namespace driftwatch
