#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <driftwatch/harness.hpp>
#include <driftwatch/power.hpp>
#include <driftwatch/version.hpp>

namespace {

using namespace driftwatch;

std::vector<Method> parse_methods(const std::string& csv) {
    std::vector<Method> methods;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string name =
            csv.substr(start, comma == std::string::npos ? comma : comma - start);
        if (name.empty()) throw std::invalid_argument("empty method name in list");
        methods.push_back(method_from_name(name));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (methods.empty()) throw std::invalid_argument("no methods given");
    return methods;
}

/// Loads the table and, when the manifest pinned a fingerprint, insists
/// the file on disk is byte-for-byte the same table.
BoundTable load_table_checked(const std::string& path,
                              const std::string& expected_fingerprint) {
    BoundTable table = BoundTable::load(path);
    if (!expected_fingerprint.empty()) {
        const std::string actual = table.fingerprint();
        if (actual != expected_fingerprint)
            throw std::runtime_error("bound table fingerprint mismatch for " + path +
                                     ": manifest expects " + expected_fingerprint +
                                     ", file has " + actual);
    }
    return table;
}

void cmd_bounds_build(const std::string& out, double eta,
                      const std::vector<double>& alphas, std::uint64_t samples,
                      std::uint64_t seed, unsigned threads) {
    const BoundTableSpec spec = default_table_spec(alphas);
    const BoundTable table = build_table(spec, eta, samples, seed, threads);
    table.save(out);
    std::cout << "wrote " << out << " (fingerprint " << table.fingerprint() << ")\n";
}

void cmd_bounds_query(const std::string& path, double alpha, double p,
                      std::uint64_t n) {
    const BoundTable table = BoundTable::load(path);
    const std::size_t ip = table.snap_p_index(p);
    const std::size_t in = table.snap_n_index(n);
    const QuantileBounds b = table.lookup(p, alpha, n);
    std::cout << "alpha=" << detail::format_double(alpha)
              << " p=" << detail::format_double(table.p_hats()[ip])
              << " n=" << table.ns()[in]
              << " lower=" << detail::format_double(b.lower)
              << " upper=" << detail::format_double(b.upper) << '\n';
}

void cmd_bounds_info(const std::string& path) {
    const BoundTable table = BoundTable::load(path);
    std::cout << "eta=" << detail::format_double(table.eta()) << '\n'
              << "alphas=";
    for (std::size_t i = 0; i < table.alphas().size(); ++i)
        std::cout << (i ? "," : "") << detail::format_double(table.alphas()[i]);
    std::cout << '\n'
              << "p_cells=" << table.p_hats().size() << '\n'
              << "n_cells=" << table.ns().size() << '\n'
              << "samples=" << table.mc_samples_used() << '\n'
              << "seed=" << table.seed() << '\n'
              << "fingerprint=" << table.fingerprint() << '\n';
}

void cmd_gen(const std::string& scenario, std::uint64_t length, std::uint64_t seed,
             const std::string& out, std::string sidecar) {
    const Scenario& sc = find_scenario(scenario);
    StreamMeta meta;
    meta.config = make_drift_config(sc, length, seed);
    meta.scenario = sc.name;
    const auto records = generate_stream(meta.config);
    write_stream_csv(records, out);
    if (sidecar.empty()) sidecar = out + ".json";
    write_stream_sidecar(meta, sidecar);
    std::cout << "wrote " << out << " (" << records.size() << " records) and "
              << sidecar << '\n';
}

void run_and_report(const ExperimentConfig& config, const std::string& table_path,
                    const std::string& expected_fingerprint, const std::string& out,
                    unsigned threads) {
    bool wants_lfr = false;
    for (Method m : config.methods) wants_lfr |= (m == Method::lfr);

    BoundTable table;
    if (wants_lfr) {
        if (table_path.empty())
            throw std::runtime_error(
                "this run includes the lfr method; pass --table");
        table = load_table_checked(table_path, expected_fingerprint);
    }
    const ExperimentResult result =
        run_experiment(config, wants_lfr ? &table : nullptr, threads);
    emit_report(result, table_path, out);
    const auto scores = score_detections(result);
    std::cout << "wrote report to " << out << '\n';
    for (const auto& s : scores)
        std::cout << method_name(s.method) << ": " << s.true_detections << " true, "
                  << s.delayed_detections << " delayed, " << s.false_detections
                  << " false\n";
}

void cmd_power(const PowerConfig& config, const std::string& out) {
    const PowerGrid grid = estimate_power(config);
    write_power_csv(grid, out);
    std::cout << "wrote " << out << " (" << grid.cells.size() << " cells, bounds ["
              << detail::format_double(grid.decayed_bounds.lower) << ", "
              << detail::format_double(grid.decayed_bounds.upper) << "])\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming drift detection toolkit"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    // bounds build / query / info
    auto* bounds = app.add_subcommand("bounds", "build or inspect null bound tables");
    bounds->require_subcommand(1);

    struct {
        std::string out;
        double eta = 0.9;
        std::vector<double> alphas;
        std::uint64_t samples = 200000;
        std::uint64_t seed = 1;
        unsigned threads = 0;
    } build_opts;
    auto* build = bounds->add_subcommand("build", "Monte-Carlo a bound table");
    build->add_option("--out", build_opts.out, "output table file")->required();
    build->add_option("--eta", build_opts.eta, "decay factor (default 0.9)");
    build->add_option("--alpha", build_opts.alphas, "significance level (repeatable)")
        ->required()
        ->expected(-1);
    build->add_option("--samples", build_opts.samples,
                      "Monte-Carlo draws per cell (default 200000)");
    build->add_option("--seed", build_opts.seed, "RNG seed (default 1)");
    build->add_option("--threads", build_opts.threads,
                      "worker threads, 0 = hardware (default 0)");
    build->callback([&] {
        cmd_bounds_build(build_opts.out, build_opts.eta, build_opts.alphas,
                         build_opts.samples, build_opts.seed, build_opts.threads);
    });

    struct {
        std::string table;
        double alpha = 0.0;
        double p = 0.0;
        std::uint64_t n = 0;
    } query_opts;
    auto* query = bounds->add_subcommand("query", "look up one cell's bounds");
    query->add_option("--table", query_opts.table, "table file")->required();
    query->add_option("--alpha", query_opts.alpha, "significance level")->required();
    query->add_option("--p", query_opts.p, "observed rate estimate")->required();
    query->add_option("--n", query_opts.n, "influenced-step count")->required();
    query->callback([&] {
        cmd_bounds_query(query_opts.table, query_opts.alpha, query_opts.p,
                         query_opts.n);
    });

    std::string info_table;
    auto* info = bounds->add_subcommand("info", "print a table's axes and identity");
    info->add_option("--table", info_table, "table file")->required();
    info->callback([&] { cmd_bounds_info(info_table); });

    // gen
    struct {
        std::string scenario = "Balance1";
        std::uint64_t length = 10000;
        std::uint64_t seed = 1;
        std::string out;
        std::string sidecar;
    } gen_opts;
    auto* gen = app.add_subcommand("gen", "generate a synthetic drift stream");
    gen->add_option("--scenario", gen_opts.scenario, "scenario name");
    gen->add_option("--length", gen_opts.length, "total stream length");
    gen->add_option("--seed", gen_opts.seed, "RNG seed");
    gen->add_option("--out", gen_opts.out, "output csv")->required();
    gen->add_option("--sidecar", gen_opts.sidecar,
                    "sidecar json path (default: <out>.json)");
    gen->callback([&] {
        cmd_gen(gen_opts.scenario, gen_opts.length, gen_opts.seed, gen_opts.out,
                gen_opts.sidecar);
    });

    // run
    struct {
        std::string scenario = "Balance1";
        std::uint64_t length = 10000;
        std::uint32_t replicates = 100;
        std::uint32_t bin_width = 200;
        std::uint64_t seed = 1;
        std::string preset = "synthetic";
        std::string methods = "lfr,nfr,ddm,ddm-oci";
        std::string table;
        std::string manifest;
        std::string out;
        unsigned threads = 0;
    } run_opts;
    auto* run = app.add_subcommand("run", "run a replicated detection experiment");
    run->add_option("--scenario", run_opts.scenario, "scenario name");
    run->add_option("--length", run_opts.length, "steps per replicate");
    run->add_option("--replicates", run_opts.replicates, "replicate count");
    run->add_option("--bin-width", run_opts.bin_width,
                    "histogram bin and true-detection window width");
    run->add_option("--seed", run_opts.seed, "base RNG seed");
    run->add_option("--preset", run_opts.preset, "parameter preset name");
    run->add_option("--methods", run_opts.methods, "comma-separated method list");
    run->add_option("--table", run_opts.table, "bound table for the lfr method");
    run->add_option("--from-manifest", run_opts.manifest,
                    "rerun the experiment a manifest.json describes");
    run->add_option("--out", run_opts.out, "report directory")->required();
    run->add_option("--threads", run_opts.threads,
                    "worker threads, 0 = hardware (default 0)");
    run->callback([&] {
        if (!run_opts.manifest.empty()) {
            const RunManifest manifest = load_manifest(run_opts.manifest);
            const std::string table_path =
                !run_opts.table.empty() ? run_opts.table : manifest.table_path;
            run_and_report(manifest.config, table_path, manifest.table_fingerprint,
                           run_opts.out, run_opts.threads);
            return;
        }
        ExperimentConfig config;
        config.scenario = run_opts.scenario;
        config.length = run_opts.length;
        config.replicates = run_opts.replicates;
        config.bin_width = run_opts.bin_width;
        config.seed = run_opts.seed;
        config.preset = run_opts.preset;
        config.methods = parse_methods(run_opts.methods);
        run_and_report(config, run_opts.table, "", run_opts.out, run_opts.threads);
    });

    // score
    struct {
        std::string detections;
        std::string manifest;
        std::string out;
    } score_opts;
    auto* score = app.add_subcommand(
        "score", "rescore a detections.csv against its manifest");
    score->add_option("--detections", score_opts.detections, "detections.csv")
        ->required();
    score->add_option("--manifest", score_opts.manifest, "manifest.json")->required();
    score->add_option("--out", score_opts.out, "output directory")->required();
    score->callback([&] {
        const RunManifest manifest = load_manifest(score_opts.manifest);
        ExperimentResult result;
        result.config = manifest.config;
        result.drift_times = drift_times(make_drift_config(
            find_scenario(manifest.config.scenario), manifest.config.length,
            manifest.config.seed));
        result.detections = read_detections_csv(score_opts.detections);
        const auto scores = score_detections(result);
        std::filesystem::create_directories(score_opts.out);
        const std::filesystem::path dir(score_opts.out);
        write_scorecard_csv(scores, dir / "scorecard.csv");
        write_histogram_csv(scores, result.config.bin_width, result.config.length,
                            dir / "histogram.csv");
        std::cout << "wrote " << (dir / "scorecard.csv").string() << " and "
                  << (dir / "histogram.csv").string() << '\n';
    });

    // power
    struct {
        PowerConfig config;
        std::string out;
    } power_opts;
    auto* power = app.add_subcommand(
        "power", "rejection-rate grid for the decayed and cumulative tests");
    power->add_option("--p", power_opts.config.p, "pre-shift rate (default 0.9)");
    power->add_option("--q", power_opts.config.qs, "post-shift rate (repeatable)")
        ->required()
        ->expected(-1);
    power->add_option("--k-max", power_opts.config.k_max, "largest lag (default 200)");
    power->add_option("--burn-in", power_opts.config.burn_in,
                      "pre-shift observations (default 1000)");
    power->add_option("--eta", power_opts.config.eta, "decay factor (default 0.9)");
    power->add_option("--alpha", power_opts.config.alpha,
                      "two-sided test size (default 0.01)");
    power->add_option("--trials", power_opts.config.trials,
                      "Monte-Carlo trials per q (default 10000)");
    power->add_option("--seed", power_opts.config.seed, "RNG seed (default 1)");
    power->add_option("--null-samples", power_opts.config.null_samples,
                      "draws behind the decayed-rate bounds (default 200000)");
    power->add_option("--out", power_opts.out, "output csv")->required();
    power->callback([&] { cmd_power(power_opts.config, power_opts.out); });

    // heatmap
    struct {
        std::vector<double> ps, qs;
        std::uint32_t k = 200;
        std::uint32_t burn_in = 1000;
        double eta = 0.9;
        double alpha = 0.01;
        std::uint32_t trials = 10000;
        std::uint64_t seed = 1;
        std::uint64_t null_samples = 200000;
        std::string out;
    } map_opts;
    auto* heatmap = app.add_subcommand(
        "heatmap", "decayed-test power over a (p, q) grid at one lag");
    heatmap->add_option("--p", map_opts.ps, "pre-shift rate (repeatable)")
        ->required()
        ->expected(-1);
    heatmap->add_option("--q", map_opts.qs, "post-shift rate (repeatable)")
        ->required()
        ->expected(-1);
    heatmap->add_option("--k", map_opts.k, "lag after the shift (default 200)");
    heatmap->add_option("--burn-in", map_opts.burn_in,
                        "pre-shift observations (default 1000)");
    heatmap->add_option("--eta", map_opts.eta, "decay factor (default 0.9)");
    heatmap->add_option("--alpha", map_opts.alpha,
                        "two-sided test size (default 0.01)");
    heatmap->add_option("--trials", map_opts.trials,
                        "Monte-Carlo trials per cell (default 10000)");
    heatmap->add_option("--seed", map_opts.seed, "RNG seed (default 1)");
    heatmap->add_option("--null-samples", map_opts.null_samples,
                        "draws behind the decayed-rate bounds (default 200000)");
    heatmap->add_option("--out", map_opts.out, "output csv")->required();
    heatmap->callback([&] {
        const PowerHeatmap map = estimate_power_heatmap(
            map_opts.ps, map_opts.qs, map_opts.k, map_opts.burn_in, map_opts.eta,
            map_opts.alpha, map_opts.trials, map_opts.seed, map_opts.null_samples);
        write_power_heatmap_csv(map, map_opts.out);
        std::cout << "wrote " << map_opts.out << " (" << map.beta.size()
                  << " cells)\n";
    });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "driftwatch: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
