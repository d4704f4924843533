#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

// End-to-end checks of the command-line binary. CTest exports the built
// binary's path as DRIFTWATCH_BIN; without it (bare test runs) these are
// skipped rather than failed.

namespace {

namespace fs = std::filesystem;

const char* cli_path() { return std::getenv("DRIFTWATCH_BIN"); }

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

/// Runs the binary inside dir; stdout lands in cli_stdout.txt, stderr in
/// cli_stderr.txt. Returns true when the process exited with status 0.
bool run_cli(const fs::path& dir, const std::string& args) {
    std::ostringstream cmd;
    cmd << "cd '" << dir.string() << "' && '" << cli_path() << "' " << args
        << " > cli_stdout.txt 2> cli_stderr.txt";
    return std::system(cmd.str().c_str()) == 0;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("cli reports its version", "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_version");
    REQUIRE(run_cli(dir.path, "--version"));
    REQUIRE(slurp(dir.path / "cli_stdout.txt") == "driftwatch 0.1.0\n");
    REQUIRE_FALSE(run_cli(dir.path, "no-such-command"));
}

TEST_CASE("cli builds, inspects and queries bound tables deterministically",
          "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_bounds");
    const std::string build_args =
        "bounds build --out t.tbl --alpha 0.005 --alpha 0.05 --samples 2000 "
        "--seed 99 --threads 1";
    REQUIRE(run_cli(dir.path, build_args));
    const std::string first = slurp(dir.path / "t.tbl");
    REQUIRE(run_cli(dir.path,
                    "bounds build --out t2.tbl --alpha 0.005 --alpha 0.05 "
                    "--samples 2000 --seed 99 --threads 2"));
    REQUIRE(slurp(dir.path / "t2.tbl") == first);

    REQUIRE(run_cli(dir.path, "bounds info --table t.tbl"));
    const std::string info = slurp(dir.path / "cli_stdout.txt");
    REQUIRE(info.find("eta=0.9\n") != std::string::npos);
    REQUIRE(info.find("alphas=0.005,0.05\n") != std::string::npos);
    REQUIRE(info.find("p_cells=101\n") != std::string::npos);
    REQUIRE(info.find("fingerprint=") != std::string::npos);

    REQUIRE(run_cli(dir.path, "bounds query --table t.tbl --alpha 0.05 --p 0.83 "
                              "--n 100"));
    const std::string query = slurp(dir.path / "cli_stdout.txt");
    // 100 sits between grid points 64 and 128; the nearer one wins.
    REQUIRE(query.find("alpha=0.05 p=0.83 n=128 lower=") != std::string::npos);

    // Alpha off the table's axis is a hard error, not an interpolation.
    REQUIRE_FALSE(run_cli(dir.path, "bounds query --table t.tbl --alpha 0.01 "
                                    "--p 0.5 --n 100"));
}

TEST_CASE("cli stream generation is seed-reproducible", "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_gen");
    REQUIRE(run_cli(dir.path,
                    "gen --scenario Imbalance1 --length 400 --seed 5 --out a.csv"));
    REQUIRE(run_cli(dir.path,
                    "gen --scenario Imbalance1 --length 400 --seed 5 --out b.csv "
                    "--sidecar b.json"));
    REQUIRE(slurp(dir.path / "a.csv") == slurp(dir.path / "b.csv"));
    REQUIRE(slurp(dir.path / "a.csv.json") == slurp(dir.path / "b.json"));

    REQUIRE(run_cli(dir.path,
                    "gen --scenario Imbalance1 --length 400 --seed 6 --out c.csv"));
    REQUIRE(slurp(dir.path / "a.csv") != slurp(dir.path / "c.csv"));

    const nlohmann::json sidecar =
        nlohmann::json::parse(slurp(dir.path / "a.csv.json"));
    REQUIRE(sidecar.at("scenario") == "Imbalance1");
    REQUIRE(sidecar.at("length") == 400);
    REQUIRE(sidecar.at("drift_times")[0] == 201);

    REQUIRE_FALSE(run_cli(dir.path, "gen --scenario Nope --out d.csv"));
}

TEST_CASE("cli experiments rerun byte for byte from their manifest", "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_run");
    REQUIRE(run_cli(dir.path,
                    "run --scenario Balance1 --length 600 --replicates 3 --seed 11 "
                    "--bin-width 100 --methods ddm,nfr --out rep1 --threads 1"));
    for (const char* name :
         {"detections.csv", "scorecard.csv", "histogram.csv", "manifest.json"})
        REQUIRE(fs::exists(dir.path / "rep1" / name));

    REQUIRE(run_cli(dir.path,
                    "run --from-manifest rep1/manifest.json --out rep2 --threads 2"));
    for (const char* name :
         {"detections.csv", "scorecard.csv", "histogram.csv", "manifest.json"})
        REQUIRE(slurp(dir.path / "rep1" / name) == slurp(dir.path / "rep2" / name));

    // Rescoring the emitted detections reproduces the scorecard.
    REQUIRE(run_cli(dir.path,
                    "score --detections rep1/detections.csv "
                    "--manifest rep1/manifest.json --out rescore"));
    REQUIRE(slurp(dir.path / "rescore" / "scorecard.csv") ==
            slurp(dir.path / "rep1" / "scorecard.csv"));
    REQUIRE(slurp(dir.path / "rescore" / "histogram.csv") ==
            slurp(dir.path / "rep1" / "histogram.csv"));
}

TEST_CASE("cli rejects broken run requests with nonzero status", "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_errors");
    REQUIRE_FALSE(run_cli(dir.path,
                          "run --scenario Nope --length 100 --replicates 2 "
                          "--methods ddm --out x"));
    REQUIRE_FALSE(run_cli(dir.path,
                          "run --scenario Balance1 --length 100 --replicates 2 "
                          "--methods lfr --out x"));
    REQUIRE_FALSE(run_cli(dir.path,
                          "run --scenario Balance1 --length 100 --replicates 2 "
                          "--methods ddm,ddm --out x"));

    // A manifest that pins a different table's fingerprint must refuse to
    // run against this file.
    REQUIRE(run_cli(dir.path,
                    "bounds build --out t.tbl --alpha 0.005 --alpha 0.05 "
                    "--samples 2000 --seed 99 --threads 1"));
    REQUIRE(run_cli(dir.path,
                    "run --scenario Balance1 --length 200 --replicates 2 --seed 4 "
                    "--methods ddm --out rep --threads 1"));
    nlohmann::json manifest =
        nlohmann::json::parse(slurp(dir.path / "rep" / "manifest.json"));
    manifest["methods"] = {"lfr"};
    manifest["table"] = {{"path", "t.tbl"}, {"fingerprint", "0000000000000000"}};
    {
        std::ofstream out(dir.path / "bad_manifest.json", std::ios::trunc);
        out << manifest.dump(2) << '\n';
    }
    REQUIRE_FALSE(run_cli(dir.path, "run --from-manifest bad_manifest.json --out x"));
    const std::string err = slurp(dir.path / "cli_stderr.txt");
    REQUIRE(err.find("fingerprint mismatch") != std::string::npos);
}

TEST_CASE("cli power outputs are deterministic csv", "[cli]") {
    if (!cli_path()) SKIP("DRIFTWATCH_BIN not set");
    ScratchDir dir("driftwatch_cli_power");
    const std::string args =
        "power --p 0.9 --q 0.5 --q 0.9 --k-max 10 --burn-in 50 --trials 200 "
        "--null-samples 5000 --seed 3 --out ";
    REQUIRE(run_cli(dir.path, args + "p1.csv"));
    REQUIRE(run_cli(dir.path, args + "p2.csv"));
    const std::string csv = slurp(dir.path / "p1.csv");
    REQUIRE(csv == slurp(dir.path / "p2.csv"));
    REQUIRE(csv.rfind("k,q,beta_decayed,beta_cumulative,delta\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 10);

    REQUIRE(run_cli(dir.path,
                    "heatmap --p 0.8 --q 0.4 --q 0.8 --k 20 --burn-in 50 "
                    "--trials 200 --null-samples 5000 --out h.csv"));
    const std::string hmap = slurp(dir.path / "h.csv");
    REQUIRE(hmap.rfind("p,q,beta_decayed\n", 0) == 0);
    REQUIRE(std::count(hmap.begin(), hmap.end(), '\n') == 1 + 2);
}
