#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "driftwatch/detectors.hpp"
#include "driftwatch/format.hpp"
#include "driftwatch/stream.hpp"
#include "driftwatch/version.hpp"

// Replicated experiments: generate seeded streams for a scenario, run the
// chosen detectors over every replicate, classify each drift signal as
// true / delayed / false against the known drift times, and write the
// whole thing out (plus a manifest that reruns the experiment exactly).

namespace driftwatch {

enum class Method { lfr, nfr, ddm, ddm_oci };

inline constexpr std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::lfr: return "lfr";
        case Method::nfr: return "nfr";
        case Method::ddm: return "ddm";
        default: return "ddm-oci";
    }
}

inline Method method_from_name(std::string_view name) {
    for (Method m : {Method::lfr, Method::nfr, Method::ddm, Method::ddm_oci})
        if (method_name(m) == name) return m;
    throw std::invalid_argument("unknown method '" + std::string(name) +
                                "' (known: lfr, nfr, ddm, ddm-oci)");
}

/// Per-method parameter bundle an experiment runs with.
struct ExperimentPreset {
    LfrParams lfr;
    NfrParams nfr;
    DdmParams ddm;
    DdmOciParams oci;
};

/// The two stock presets. "synthetic" is the default tuning for the
/// synthetic scenario battery; "benchmark" is the variant used for
/// real-world benchmark streams (a less extreme drift significance).
inline ExperimentPreset preset_by_name(std::string_view name) {
    ExperimentPreset preset;
    if (name == "synthetic") {
        preset.lfr.eta = PerRate<double>::filled(0.9);
        preset.lfr.warn_level = PerRate<double>::filled(1e-2);
        preset.lfr.detect_level = PerRate<double>::filled(1e-5);
        preset.nfr.warn_level = PerRate<double>::filled(0.025);
        preset.nfr.detect_level = PerRate<double>::filled(1e-3);
        preset.ddm = DdmParams{2.0, 3.0, 30};
        preset.oci = DdmOciParams{0.9, 10.0, 20.0, 30};
        return preset;
    }
    if (name == "benchmark") {
        preset.lfr.eta = PerRate<double>::filled(0.9);
        preset.lfr.warn_level = PerRate<double>::filled(1e-2);
        preset.lfr.detect_level = PerRate<double>::filled(1e-4);
        preset.nfr.warn_level = PerRate<double>::filled(0.025);
        preset.nfr.detect_level = PerRate<double>::filled(1e-3);
        preset.ddm = DdmParams{2.0, 3.0, 30};
        preset.oci = DdmOciParams{0.9, 10.0, 20.0, 30};
        return preset;
    }
    throw std::invalid_argument("unknown preset '" + std::string(name) +
                                "' (known: synthetic, benchmark)");
}

struct ExperimentConfig {
    std::string scenario = "Balance1";
    std::uint64_t length = 10000;
    std::uint32_t replicates = 100;
    std::uint32_t bin_width = 200;
    std::uint64_t seed = 1;
    std::string preset = "synthetic";
    std::vector<Method> methods = {Method::lfr, Method::nfr, Method::ddm,
                                   Method::ddm_oci};

    void validate() const {
        if (length < 2) throw std::invalid_argument("ExperimentConfig: length < 2");
        if (replicates < 1)
            throw std::invalid_argument("ExperimentConfig: replicates < 1");
        if (bin_width < 1)
            throw std::invalid_argument("ExperimentConfig: bin_width < 1");
        if (methods.empty())
            throw std::invalid_argument("ExperimentConfig: no methods selected");
        for (std::size_t i = 0; i < methods.size(); ++i)
            for (std::size_t j = i + 1; j < methods.size(); ++j)
                if (methods[i] == methods[j])
                    throw std::invalid_argument("ExperimentConfig: duplicate method");
        (void)find_scenario(scenario);
        (void)preset_by_name(preset);
    }
};

struct DetectionRow {
    Method method;
    std::uint32_t replicate = 0;
    std::uint64_t time = 0;
    /// First step of the warning zone that led to this signal (== time
    /// when the signal had no warning lead-in).
    std::uint64_t warn_begin = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<std::uint64_t> drift_times;
    /// Fingerprint of the bound table the run used; empty when the
    /// table-driven method was not part of the run.
    std::string table_fingerprint;
    /// Sorted by (method position in config, replicate, time).
    std::vector<DetectionRow> detections;
};

inline std::unique_ptr<Detector> make_detector(Method method,
                                               const ExperimentPreset& preset,
                                               const BoundTable* table) {
    switch (method) {
        case Method::lfr:
            return std::make_unique<LfrDetector>(preset.lfr, *table);
        case Method::nfr:
            return std::make_unique<NfrDetector>(preset.nfr);
        case Method::ddm:
            return std::make_unique<DdmDetector>(preset.ddm);
        default:
            return std::make_unique<DdmOciDetector>(preset.oci);
    }
}

/// Runs every (replicate, method) pair. Replicate r draws its stream from
/// derive_seed(config.seed, r), so results are reproducible and
/// independent of the worker count. The table may be null when the
/// table-driven method is not requested; when it is requested, its
/// parameters are validated against the table before any stream runs.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const BoundTable* table,
                                       unsigned threads = 0) {
    config.validate();
    const Scenario& scenario = find_scenario(config.scenario);
    const ExperimentPreset preset = preset_by_name(config.preset);

    bool wants_lfr = false;
    for (Method m : config.methods) wants_lfr |= (m == Method::lfr);
    if (wants_lfr) {
        if (table == nullptr || table->empty())
            throw std::invalid_argument(
                "run_experiment: the lfr method requires a bound table");
        // Fails fast (eta mismatch, level not on the alpha axis) before
        // any replicate runs.
        LfrDetector probe(preset.lfr, *table);
        (void)probe;
    }

    ExperimentResult result;
    result.config = config;
    {
        const StreamConfig probe_config =
            make_drift_config(scenario, config.length, config.seed);
        result.drift_times = drift_times(probe_config);
    }
    if (wants_lfr) result.table_fingerprint = table->fingerprint();

    const std::size_t nm = config.methods.size();
    std::vector<std::vector<DetectionRow>> slots(
        static_cast<std::size_t>(config.replicates) * nm);

    std::atomic<std::uint32_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::uint32_t rep = next.fetch_add(1, std::memory_order_relaxed);
            if (rep >= config.replicates) break;
            const StreamConfig sc = make_drift_config(scenario, config.length,
                                                      derive_seed(config.seed, rep));
            const std::vector<StreamRecord> records = generate_stream(sc);
            for (std::size_t mi = 0; mi < nm; ++mi) {
                const Method method = config.methods[mi];
                const auto detector = make_detector(method, preset, table);
                auto& sink = slots[static_cast<std::size_t>(rep) * nm + mi];
                for (const StreamRecord& r : records) {
                    const StepOutcome out = detector->step(r.y, r.yhat);
                    if (out.status == DriftStatus::Drift)
                        sink.push_back({method, rep, r.t, out.window->begin});
                }
            }
        }
    };

    unsigned worker_count =
        threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    if (worker_count > config.replicates) worker_count = config.replicates;
    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t mi = 0; mi < nm; ++mi)
        for (std::uint32_t rep = 0; rep < config.replicates; ++rep) {
            const auto& sink = slots[static_cast<std::size_t>(rep) * nm + mi];
            result.detections.insert(result.detections.end(), sink.begin(), sink.end());
        }
    return result;
}

// ---------------------------------------------------------------------------
// Scoring.
// ---------------------------------------------------------------------------

struct MethodScore {
    Method method;
    std::uint64_t true_detections = 0;
    std::uint64_t delayed_detections = 0;
    std::uint64_t false_detections = 0;
    std::uint64_t total_detections = 0;
    /// Detection counts per bin of bin_width over [1, length], all
    /// replicates pooled.
    std::vector<std::uint64_t> histogram;
};

/// Classifies each detection against the drift times:
///   true     first signal a replicate lands within [d, d + bin_width)
///            of a drift d (at most one per replicate per drift; later
///            in-window signals count as delayed echoes);
///   delayed  after the window but before the concept's midpoint, or
///            anywhere after the window for the final concept;
///   false    before the first drift, anywhere on a driftless stream, or
///            from a concept's midpoint up to the next drift.
/// true + delayed + false == total by construction.
inline std::vector<MethodScore> score_detections(const ExperimentResult& result) {
    const auto& drifts = result.drift_times;
    const std::uint64_t length = result.config.length;
    const std::uint32_t width = result.config.bin_width;
    const std::size_t bins = static_cast<std::size_t>((length + width - 1) / width);
    const std::size_t nm = result.config.methods.size();

    std::vector<MethodScore> scores(nm);
    for (std::size_t mi = 0; mi < nm; ++mi) {
        scores[mi].method = result.config.methods[mi];
        scores[mi].histogram.assign(bins, 0);
    }
    auto method_slot = [&](Method m) {
        for (std::size_t mi = 0; mi < nm; ++mi)
            if (result.config.methods[mi] == m) return mi;
        throw std::logic_error("score_detections: detection from unknown method");
    };

    // credited[replicate][drift index] per method
    std::vector<std::vector<bool>> credited(
        nm, std::vector<bool>(static_cast<std::size_t>(result.config.replicates) *
                                  std::max<std::size_t>(drifts.size(), 1),
                              false));

    for (const DetectionRow& row : result.detections) {
        const std::size_t mi = method_slot(row.method);
        MethodScore& score = scores[mi];
        ++score.total_detections;
        if (row.time >= 1 && row.time <= length)
            ++score.histogram[static_cast<std::size_t>((row.time - 1) / width)];

        // Last drift at or before the detection.
        std::size_t idx = drifts.size();
        while (idx > 0 && drifts[idx - 1] > row.time) --idx;
        if (idx == 0) {
            ++score.false_detections;
            continue;
        }
        const std::uint64_t d = drifts[idx - 1];
        if (row.time < d + width) {
            auto flag = credited[mi].begin() +
                        static_cast<std::ptrdiff_t>(
                            static_cast<std::size_t>(row.replicate) * drifts.size() +
                            (idx - 1));
            if (!*flag) {
                *flag = true;
                ++score.true_detections;
            } else {
                ++score.delayed_detections;
            }
            continue;
        }
        if (idx == drifts.size()) {
            ++score.delayed_detections;
            continue;
        }
        const std::uint64_t concept_end = drifts[idx];
        const std::uint64_t midpoint = d + (concept_end - d) / 2;
        if (row.time < midpoint)
            ++score.delayed_detections;
        else
            ++score.false_detections;
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Report files.
// ---------------------------------------------------------------------------

inline void write_detections_csv(const ExperimentResult& result,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "method,replicate,detect_time,warn_begin\n";
    for (const auto& row : result.detections)
        out << method_name(row.method) << ',' << row.replicate << ',' << row.time << ','
            << row.warn_begin << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Reads back a detections.csv written by write_detections_csv.
inline std::vector<DetectionRow> read_detections_csv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "method,replicate,detect_time,warn_begin")
        throw std::runtime_error("unexpected detections header in " + path.string());
    std::vector<DetectionRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> field;
        std::size_t start = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            const std::size_t comma = line.find(',', start);
            if ((comma == std::string::npos) != (i == 3))
                throw std::runtime_error("malformed detections row: " + line);
            field[i] = line.substr(start, comma - start);
            start = comma + 1;
        }
        DetectionRow row;
        row.method = method_from_name(field[0]);
        row.replicate = static_cast<std::uint32_t>(std::stoul(field[1]));
        row.time = std::stoull(field[2]);
        row.warn_begin = std::stoull(field[3]);
        rows.push_back(row);
    }
    return rows;
}

inline void write_scorecard_csv(const std::vector<MethodScore>& scores,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "method,true_detections,delayed_detections,false_detections,total_"
           "detections\n";
    for (const auto& s : scores)
        out << method_name(s.method) << ',' << s.true_detections << ','
            << s.delayed_detections << ',' << s.false_detections << ','
            << s.total_detections << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_histogram_csv(const std::vector<MethodScore>& scores,
                                std::uint32_t bin_width, std::uint64_t length,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "method,bin_start,bin_end,count\n";
    for (const auto& s : scores) {
        for (std::size_t b = 0; b < s.histogram.size(); ++b) {
            const std::uint64_t start = static_cast<std::uint64_t>(b) * bin_width + 1;
            const std::uint64_t end =
                std::min<std::uint64_t>(length, start + bin_width - 1);
            out << method_name(s.method) << ',' << start << ',' << end << ','
                << s.histogram[b] << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Everything needed to rerun the experiment byte-for-byte: the config,
/// plus the identity of the bound table it used.
struct RunManifest {
    ExperimentConfig config;
    std::string table_path;
    std::string table_fingerprint;
};

inline nlohmann::json manifest_to_json(const RunManifest& manifest,
                                       const std::vector<std::uint64_t>& drift_times) {
    nlohmann::json j;
    j["schema"] = "driftwatch-run/1";
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["scenario"] = manifest.config.scenario;
    j["length"] = manifest.config.length;
    j["replicates"] = manifest.config.replicates;
    j["bin_width"] = manifest.config.bin_width;
    j["seed"] = manifest.config.seed;
    j["preset"] = manifest.config.preset;
    nlohmann::json methods = nlohmann::json::array();
    for (Method m : manifest.config.methods) methods.push_back(std::string(method_name(m)));
    j["methods"] = methods;
    j["drift_times"] = drift_times;
    if (!manifest.table_fingerprint.empty()) {
        j["table"] = {{"path", manifest.table_path},
                      {"fingerprint", manifest.table_fingerprint}};
    }
    const ExperimentPreset preset = preset_by_name(manifest.config.preset);
    auto per_rate = [](const PerRate<double>& v) {
        return nlohmann::json{v[RateKind::tpr], v[RateKind::tnr], v[RateKind::ppv],
                              v[RateKind::npv]};
    };
    j["params"] = {
        {"lfr",
         {{"eta", per_rate(preset.lfr.eta)},
          {"warn_level", per_rate(preset.lfr.warn_level)},
          {"detect_level", per_rate(preset.lfr.detect_level)}}},
        {"nfr",
         {{"warn_level", per_rate(preset.nfr.warn_level)},
          {"detect_level", per_rate(preset.nfr.detect_level)}}},
        {"ddm",
         {{"warn_mult", preset.ddm.warn_mult},
          {"detect_mult", preset.ddm.detect_mult},
          {"min_observations", preset.ddm.min_observations}}},
        {"ddm-oci",
         {{"eta", preset.oci.eta},
          {"warn_mult", preset.oci.warn_mult},
          {"detect_mult", preset.oci.detect_mult},
          {"min_minority", preset.oci.min_minority}}}};
    return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j.at("schema") != "driftwatch-run/1")
        throw std::runtime_error("run manifest: unknown schema");
    RunManifest manifest;
    manifest.config.scenario = j.at("scenario").get<std::string>();
    manifest.config.length = j.at("length").get<std::uint64_t>();
    manifest.config.replicates = j.at("replicates").get<std::uint32_t>();
    manifest.config.bin_width = j.at("bin_width").get<std::uint32_t>();
    manifest.config.seed = j.at("seed").get<std::uint64_t>();
    manifest.config.preset = j.at("preset").get<std::string>();
    manifest.config.methods.clear();
    for (const auto& name : j.at("methods"))
        manifest.config.methods.push_back(method_from_name(name.get<std::string>()));
    if (j.contains("table")) {
        manifest.table_path = j.at("table").at("path").get<std::string>();
        manifest.table_fingerprint = j.at("table").at("fingerprint").get<std::string>();
    }
    manifest.config.validate();
    return manifest;
}

inline void write_manifest(const RunManifest& manifest,
                           const std::vector<std::uint64_t>& drift_times,
                           const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << manifest_to_json(manifest, drift_times).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return manifest_from_json(j);
}

/// Writes detections.csv, scorecard.csv, histogram.csv and manifest.json
/// into dir (created if needed).
inline void emit_report(const ExperimentResult& result, const std::string& table_path,
                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_detections_csv(result, dir / "detections.csv");
    const auto scores = score_detections(result);
    write_scorecard_csv(scores, dir / "scorecard.csv");
    write_histogram_csv(scores, result.config.bin_width, result.config.length,
                        dir / "histogram.csv");
    RunManifest manifest{result.config, table_path, result.table_fingerprint};
    write_manifest(manifest, result.drift_times, dir / "manifest.json");
}

// ---------------------------------------------------------------------------
// Trajectory dump for the table-driven detector.
// ---------------------------------------------------------------------------

/// Steps the detector over the records and writes one row per step:
/// t, labels, the four decayed rates, the four rate estimates, status.
/// Rates are sampled as they stood when the step was evaluated, so rows on
/// a drift step show the excursion rather than the freshly reset state.
inline void write_lfr_trace_csv(const std::vector<StreamRecord>& records,
                                const LfrParams& params, const BoundTable& table,
                                const std::filesystem::path& path) {
    LfrDetector detector(params, table);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "t,y,yhat,r_tpr,r_tnr,r_ppv,r_npv,phat_tpr,phat_tnr,phat_ppv,phat_npv,"
           "status\n";
    for (const StreamRecord& r : records) {
        const StepOutcome step = detector.step(r.y, r.yhat);
        out << r.t << ',' << static_cast<int>(r.y) << ',' << static_cast<int>(r.yhat);
        for (RateKind k : all_rates)
            out << ',' << detail::format_double(detector.last_decayed_rate(k));
        for (RateKind k : all_rates)
            out << ',' << detail::format_double(detector.last_rate_estimate(k));
        out << ',' << status_name(step.status) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace driftwatch
