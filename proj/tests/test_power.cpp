#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <driftwatch/power.hpp>

using namespace driftwatch;

namespace {

/// Shared grid: p = 0.9 disturbed to q after a 1000-step burn-in, exercised
/// at every lag up to 200. Computed once, inspected by several cases.
const PowerGrid& fixture_grid() {
    static const PowerGrid grid = [] {
        PowerConfig cfg;
        cfg.p = 0.9;
        cfg.qs = {0.9, 0.8, 0.5, 0.1};
        cfg.k_max = 200;
        cfg.burn_in = 1000;
        cfg.eta = 0.9;
        cfg.alpha = 0.01;
        cfg.trials = 2000;
        cfg.seed = 4242;
        cfg.null_samples = 200000;
        return estimate_power(cfg);
    }();
    return grid;
}

/// 4 standard errors of a trials-sized frequency estimate of beta.
double mc_margin(double beta, std::uint32_t trials) {
    return 4.0 * std::sqrt(beta * (1.0 - beta) / static_cast<double>(trials));
}

std::uint32_t crossover_lag(const PowerGrid& grid, std::size_t iq, std::uint32_t from) {
    for (std::uint32_t k = from; k <= grid.config.k_max; ++k) {
        const PowerCell& c = grid.at(iq, k);
        if (c.beta_cumulative >= c.beta_decayed) return k;
    }
    return 0;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

} // namespace

TEST_CASE("power config validation rejects out-of-range values", "[power]") {
    PowerConfig good;
    good.qs = {0.5};
    REQUIRE_NOTHROW(good.validate());

    PowerConfig bad = good;
    bad.p = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.qs.clear();
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.qs = {1.5};
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.k_max = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.burn_in = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.eta = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.alpha = 0.5;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.trials = 99;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = good;
    bad.null_samples = 999;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("power grid layout and acceptance region are sane", "[power]") {
    const PowerGrid& grid = fixture_grid();
    REQUIRE(grid.cells.size() == 4 * 200);
    for (std::size_t iq = 0; iq < grid.config.qs.size(); ++iq)
        for (std::uint32_t k = 1; k <= grid.config.k_max; ++k) {
            const PowerCell& c = grid.at(iq, k);
            REQUIRE(c.k == k);
            REQUIRE(c.q == grid.config.qs[iq]);
            REQUIRE(c.beta_decayed >= 0.0);
            REQUIRE(c.beta_decayed <= 1.0);
            REQUIRE(c.beta_cumulative >= 0.0);
            REQUIRE(c.beta_cumulative <= 1.0);
        }
    REQUIRE(grid.decayed_bounds.lower > 0.5);
    REQUIRE(grid.decayed_bounds.lower < 0.9);
    REQUIRE(grid.decayed_bounds.upper > 0.9);
    REQUIRE(grid.decayed_bounds.upper <= 1.0);
}

TEST_CASE("both tests hold their nominal size while the rate stays put", "[power]") {
    const PowerGrid& grid = fixture_grid();
    const double alpha = grid.config.alpha;
    // q = p row: every lag is a null experiment, so each rejection
    // frequency must sit near alpha. Factor-of-three band is ~10 standard
    // errors wide at 2000 trials.
    for (std::uint32_t k = 1; k <= grid.config.k_max; ++k) {
        const PowerCell& c = grid.at(0, k);
        REQUIRE(c.beta_decayed > alpha / 3.0);
        REQUIRE(c.beta_decayed < alpha * 3.0);
        REQUIRE(c.beta_cumulative > alpha / 3.0);
        REQUIRE(c.beta_cumulative < alpha * 3.0);
    }
}

TEST_CASE("cumulative-test rejection rates match exact binomial arithmetic",
          "[power]") {
    // The cumulative statistic is a scaled sum of two independent binomial
    // counts, so its rejection probability has a closed form. Reference
    // values were computed from exact binomial mass convolutions.
    const PowerGrid& grid = fixture_grid();
    const std::uint32_t trials = grid.config.trials;

    const double size_k1 = 0.009860288807212084;    // q = 0.9, k = 1
    const double size_k200 = 0.010742212816428984;  // q = 0.9, k = 200
    const double shift_k10 = 0.01942536762711006;   // q = 0.5, k = 10
    const double mild_k100 = 0.06815197910973171;   // q = 0.8, k = 100
    const double mild_k200 = 0.2756480202625771;    // q = 0.8, k = 200

    REQUIRE(std::abs(grid.at(0, 1).beta_cumulative - size_k1) <
            mc_margin(size_k1, trials));
    REQUIRE(std::abs(grid.at(0, 200).beta_cumulative - size_k200) <
            mc_margin(size_k200, trials));
    REQUIRE(std::abs(grid.at(2, 10).beta_cumulative - shift_k10) <
            mc_margin(shift_k10, trials));
    REQUIRE(std::abs(grid.at(1, 100).beta_cumulative - mild_k100) <
            mc_margin(mild_k100, trials));
    REQUIRE(std::abs(grid.at(1, 200).beta_cumulative - mild_k200) <
            mc_margin(mild_k200, trials));
}

TEST_CASE("the decayed statistic reacts first after a large shift", "[power]") {
    const PowerGrid& grid = fixture_grid();
    // Ten steps after 0.9 drops to 0.5 the decayed rate has crossed most of
    // the gap while the cumulative mean has barely moved.
    const PowerCell& c = grid.at(2, 10);
    REQUIRE(c.beta_decayed - c.beta_cumulative > 0.5);
    REQUIRE(c.beta_cumulative < 0.05);
}

TEST_CASE("power increases with the size of the shift", "[power]") {
    const PowerGrid& grid = fixture_grid();
    const std::uint32_t k = 200;
    const PowerCell& null_cell = grid.at(0, k);  // q = 0.9
    const PowerCell& mild = grid.at(1, k);       // q = 0.8
    const PowerCell& medium = grid.at(2, k);     // q = 0.5
    const PowerCell& extreme = grid.at(3, k);    // q = 0.1

    REQUIRE(extreme.beta_decayed > medium.beta_decayed);
    REQUIRE(medium.beta_decayed > mild.beta_decayed);
    REQUIRE(mild.beta_decayed > null_cell.beta_decayed);
    REQUIRE(extreme.beta_cumulative >= medium.beta_cumulative);
    REQUIRE(medium.beta_cumulative > mild.beta_cumulative);
    REQUIRE(mild.beta_cumulative > null_cell.beta_cumulative);

    REQUIRE(extreme.beta_decayed >= 0.999);
    REQUIRE(extreme.beta_cumulative >= 0.999);
}

TEST_CASE("the cumulative test eventually overtakes the decayed one", "[power]") {
    // For the mild shift 0.9 -> 0.8 the decayed rejection rate plateaus
    // (its window forgets the burn-in) while the cumulative test keeps
    // accumulating evidence. A reference run at tenfold trials put the
    // overtake lag at 126; the band covers the seed-to-seed spread at
    // 2000 trials. The scan starts at lag 50, after the two curves have
    // separated cleanly, to avoid ties in the small-lag noise.
    const PowerGrid& grid = fixture_grid();
    const std::uint32_t k_star = crossover_lag(grid, 1, 50);
    REQUIRE(k_star >= 106);
    REQUIRE(k_star <= 146);

    const PowerCell& before = grid.at(1, 60);
    REQUIRE(before.beta_decayed > before.beta_cumulative);
    const PowerCell& after = grid.at(1, 200);
    REQUIRE(after.beta_cumulative > after.beta_decayed);
}

TEST_CASE("power estimates are reproducible from the seed", "[power]") {
    PowerConfig cfg;
    cfg.p = 0.8;
    cfg.qs = {0.8, 0.4};
    cfg.k_max = 30;
    cfg.burn_in = 150;
    cfg.eta = 0.9;
    cfg.alpha = 0.05;
    cfg.trials = 300;
    cfg.seed = 31337;
    cfg.null_samples = 20000;

    const PowerGrid a = estimate_power(cfg);
    const PowerGrid b = estimate_power(cfg);
    REQUIRE(a.decayed_bounds.lower == b.decayed_bounds.lower);
    REQUIRE(a.decayed_bounds.upper == b.decayed_bounds.upper);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        REQUIRE(a.cells[i].beta_decayed == b.cells[i].beta_decayed);
        REQUIRE(a.cells[i].beta_cumulative == b.cells[i].beta_cumulative);
    }

    cfg.seed = 31338;
    const PowerGrid c = estimate_power(cfg);
    bool any_differs = false;
    for (std::size_t i = 0; i < a.cells.size() && !any_differs; ++i)
        any_differs = a.cells[i].beta_decayed != c.cells[i].beta_decayed ||
                      a.cells[i].beta_cumulative != c.cells[i].beta_cumulative;
    REQUIRE(any_differs);
}

TEST_CASE("heatmap rows agree exactly with the grid estimator", "[power]") {
    const std::vector<double> qs = {0.6, 0.85};
    const std::uint32_t k = 40, burn_in = 200, trials = 400;
    const double eta = 0.9, alpha = 0.01;
    const std::uint64_t seed = 555, null_samples = 20000;

    const PowerHeatmap map = estimate_power_heatmap({0.85}, qs, k, burn_in, eta,
                                                    alpha, trials, seed, null_samples);
    REQUIRE(map.beta.size() == 2);

    PowerConfig cfg;
    cfg.p = 0.85;
    cfg.qs = qs;
    cfg.k_max = k;
    cfg.burn_in = burn_in;
    cfg.eta = eta;
    cfg.alpha = alpha;
    cfg.trials = trials;
    cfg.seed = derive_seed(seed, 0);
    cfg.null_samples = null_samples;
    const PowerGrid grid = estimate_power(cfg);

    for (std::size_t iq = 0; iq < qs.size(); ++iq)
        REQUIRE(map.at(0, iq) == grid.at(iq, k).beta_decayed);

    // Diagonal cell is a null experiment, off-diagonal has real power.
    REQUIRE(map.at(0, 1) < 0.05);
    REQUIRE(map.at(0, 0) > 0.4);
}

TEST_CASE("power csv outputs round-trip through text", "[power]") {
    PowerConfig cfg;
    cfg.p = 0.7;
    cfg.qs = {0.7, 0.3};
    cfg.k_max = 5;
    cfg.burn_in = 50;
    cfg.alpha = 0.05;
    cfg.trials = 200;
    cfg.seed = 7;
    cfg.null_samples = 5000;
    const PowerGrid grid = estimate_power(cfg);

    const auto path =
        std::filesystem::temp_directory_path() / "driftwatch_test_power.csv";
    write_power_csv(grid, path);
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 1 + grid.cells.size());
    REQUIRE(lines[0] == "k,q,beta_decayed,beta_cumulative,delta");
    for (std::size_t i = 0; i < grid.cells.size(); ++i) {
        const auto fields = split_csv(lines[i + 1]);
        REQUIRE(fields.size() == 5);
        const PowerCell& c = grid.cells[i];
        REQUIRE(std::stoul(fields[0]) == c.k);
        REQUIRE(std::stod(fields[1]) == c.q);
        REQUIRE(std::stod(fields[2]) == c.beta_decayed);
        REQUIRE(std::stod(fields[3]) == c.beta_cumulative);
        REQUIRE(std::stod(fields[4]) == c.beta_decayed - c.beta_cumulative);
    }
    std::filesystem::remove(path);

    PowerHeatmap map;
    map.ps = {0.25, 0.75};
    map.qs = {0.1, 0.5, 0.9};
    map.beta = {0.11, 0.12, 0.13, 0.21, 0.22, 0.23};
    const auto hpath =
        std::filesystem::temp_directory_path() / "driftwatch_test_heatmap.csv";
    write_power_heatmap_csv(map, hpath);
    const auto hlines = read_lines(hpath);
    REQUIRE(hlines.size() == 1 + 6);
    REQUIRE(hlines[0] == "p,q,beta_decayed");
    const auto row = split_csv(hlines[4]);  // second p, first q
    REQUIRE(row.size() == 3);
    REQUIRE(std::stod(row[0]) == 0.75);
    REQUIRE(std::stod(row[1]) == 0.1);
    REQUIRE(std::stod(row[2]) == 0.21);
    std::filesystem::remove(hpath);
}
