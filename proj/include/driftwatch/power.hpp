#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "driftwatch/bound_table.hpp"
#include "driftwatch/format.hpp"
#include "driftwatch/normal.hpp"
#include "driftwatch/rng.hpp"

// Statistical power of the two candidate test statistics.
//
// Setup: a rate holds at p for a burn-in of M observations, then jumps to
// q; the test still believes p. At each lag k we ask how often each
// statistic falls outside its acceptance region:
//
//   decayed rate      R   against Monte-Carlo quantile bounds estimated
//                         at (p, eta, n = M), alpha/2 per tail;
//   cumulative rate   P^  against p +/- z_(1-alpha/2) * sqrt(p(1-p)/(M+k)).
//
// Both regions have two-sided size alpha under the null, so beta(q = p)
// reproduces alpha and beta at q != p is the power at lag k. The decayed
// statistic trades a little loss at large k for a large gain at small k;
// the grid makes that crossover measurable.

namespace driftwatch {

struct PowerConfig {
    double p = 0.9;
    std::vector<double> qs;
    std::uint32_t k_max = 200;
    /// Observations under p before the switch (the "M" above).
    std::uint32_t burn_in = 1000;
    double eta = 0.9;
    /// Total two-sided test size.
    double alpha = 0.01;
    std::uint32_t trials = 10000;
    std::uint64_t seed = 1;
    /// Draws behind the decayed-rate null bounds.
    std::uint64_t null_samples = 200000;

    void validate() const {
        if (!(p > 0.0 && p < 1.0))
            throw std::invalid_argument("PowerConfig: p must lie in (0, 1)");
        if (qs.empty()) throw std::invalid_argument("PowerConfig: qs must be nonempty");
        for (double q : qs)
            if (!(q >= 0.0 && q <= 1.0))
                throw std::invalid_argument("PowerConfig: q must lie in [0, 1]");
        if (k_max < 1) throw std::invalid_argument("PowerConfig: k_max must be >= 1");
        if (burn_in < 1) throw std::invalid_argument("PowerConfig: burn_in must be >= 1");
        if (!(eta >= 0.0 && eta < 1.0))
            throw std::invalid_argument("PowerConfig: eta must lie in [0, 1)");
        if (!(alpha > 0.0 && alpha < 0.5))
            throw std::invalid_argument("PowerConfig: alpha must lie in (0, 0.5)");
        if (trials < 100)
            throw std::invalid_argument("PowerConfig: trials must be >= 100");
        if (null_samples < 1000)
            throw std::invalid_argument("PowerConfig: null_samples must be >= 1000");
    }
};

struct PowerCell {
    std::uint32_t k = 0;
    double q = 0.0;
    double beta_decayed = 0.0;
    double beta_cumulative = 0.0;
};

struct PowerGrid {
    PowerConfig config;
    /// Acceptance region used for the decayed statistic.
    QuantileBounds decayed_bounds;
    /// q-major, k ascending within each q: cells[iq * k_max + (k - 1)].
    std::vector<PowerCell> cells;

    const PowerCell& at(std::size_t iq, std::uint32_t k) const {
        return cells[iq * config.k_max + (k - 1)];
    }
};

/// Rejection frequency of both statistics at every lag 1..k_max for every
/// q. Each (q, trial) pair simulates one trajectory of length M + k_max
/// and evaluates it at all lags; per-(q, trial) RNG substreams make the
/// result independent of loop order.
inline PowerGrid estimate_power(const PowerConfig& config) {
    config.validate();

    PowerGrid grid;
    grid.config = config;
    const GeomSumParams null_params{config.p, config.eta, config.burn_in};
    grid.decayed_bounds = estimate_bounds(null_params, config.alpha / 2.0,
                                          config.null_samples, derive_seed(config.seed, 0));

    const double z = inverse_normal_cdf(1.0 - config.alpha / 2.0);
    std::vector<double> band(config.k_max + 1);
    for (std::uint32_t k = 1; k <= config.k_max; ++k) {
        const double n = static_cast<double>(config.burn_in) + k;
        band[k] = z * std::sqrt(config.p * (1.0 - config.p) / n);
    }

    const double gain_hi = 1.0 - config.eta;
    grid.cells.resize(config.qs.size() * config.k_max);
    for (std::size_t iq = 0; iq < config.qs.size(); ++iq) {
        const double q = config.qs[iq];
        std::vector<std::uint64_t> reject_decayed(config.k_max + 1, 0);
        std::vector<std::uint64_t> reject_cumulative(config.k_max + 1, 0);
        const std::uint64_t q_seed = derive_seed(config.seed, iq + 1);
        for (std::uint32_t trial = 0; trial < config.trials; ++trial) {
            Xoshiro256pp rng(derive_seed(q_seed, trial));
            double r = 0.0;
            std::uint64_t successes = 0;
            for (std::uint32_t i = 0; i < config.burn_in; ++i) {
                const bool hit = rng.next_double() < config.p;
                r = config.eta * r + (hit ? gain_hi : 0.0);
                successes += hit ? 1 : 0;
            }
            for (std::uint32_t k = 1; k <= config.k_max; ++k) {
                const bool hit = rng.next_double() < q;
                r = config.eta * r + (hit ? gain_hi : 0.0);
                successes += hit ? 1 : 0;
                if (r < grid.decayed_bounds.lower || r > grid.decayed_bounds.upper)
                    ++reject_decayed[k];
                const double n = static_cast<double>(config.burn_in) + k;
                const double phat = static_cast<double>(successes) / n;
                if (std::abs(phat - config.p) > band[k]) ++reject_cumulative[k];
            }
        }
        for (std::uint32_t k = 1; k <= config.k_max; ++k) {
            PowerCell& cell = grid.cells[iq * config.k_max + (k - 1)];
            cell.k = k;
            cell.q = q;
            cell.beta_decayed = static_cast<double>(reject_decayed[k]) /
                                static_cast<double>(config.trials);
            cell.beta_cumulative = static_cast<double>(reject_cumulative[k]) /
                                   static_cast<double>(config.trials);
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Heatmap over (p, q) at one fixed lag, decayed statistic only.
// ---------------------------------------------------------------------------

struct PowerHeatmap {
    std::vector<double> ps, qs;
    std::uint32_t k = 200;
    std::uint32_t burn_in = 1000;
    double eta = 0.9;
    double alpha = 0.01;
    std::uint32_t trials = 10000;
    std::uint64_t seed = 1;
    std::uint64_t null_samples = 200000;
    /// ps.size() x qs.size(), p-major.
    std::vector<double> beta;

    double at(std::size_t ipr, std::size_t iq) const {
        return beta[ipr * qs.size() + iq];
    }
};

inline PowerHeatmap estimate_power_heatmap(std::vector<double> ps,
                                           std::vector<double> qs, std::uint32_t k,
                                           std::uint32_t burn_in, double eta,
                                           double alpha, std::uint32_t trials,
                                           std::uint64_t seed,
                                           std::uint64_t null_samples = 200000) {
    PowerHeatmap map;
    map.ps = std::move(ps);
    map.qs = std::move(qs);
    map.k = k;
    map.burn_in = burn_in;
    map.eta = eta;
    map.alpha = alpha;
    map.trials = trials;
    map.seed = seed;
    map.null_samples = null_samples;
    map.beta.resize(map.ps.size() * map.qs.size());

    for (std::size_t ipr = 0; ipr < map.ps.size(); ++ipr) {
        PowerConfig config;
        config.p = map.ps[ipr];
        config.qs = map.qs;
        config.k_max = k;
        config.burn_in = burn_in;
        config.eta = eta;
        config.alpha = alpha;
        config.trials = trials;
        config.seed = derive_seed(seed, ipr);
        config.null_samples = null_samples;
        config.validate();

        const GeomSumParams null_params{config.p, config.eta, config.burn_in};
        const QuantileBounds bounds =
            estimate_bounds(null_params, config.alpha / 2.0, config.null_samples,
                            derive_seed(config.seed, 0));
        const double gain_hi = 1.0 - config.eta;
        for (std::size_t iq = 0; iq < config.qs.size(); ++iq) {
            const double q = config.qs[iq];
            const std::uint64_t q_seed = derive_seed(config.seed, iq + 1);
            std::uint64_t rejections = 0;
            for (std::uint32_t trial = 0; trial < config.trials; ++trial) {
                Xoshiro256pp rng(derive_seed(q_seed, trial));
                double r = 0.0;
                for (std::uint32_t i = 0; i < config.burn_in; ++i)
                    r = config.eta * r + (rng.next_double() < config.p ? gain_hi : 0.0);
                for (std::uint32_t i = 0; i < k; ++i)
                    r = config.eta * r + (rng.next_double() < q ? gain_hi : 0.0);
                if (r < bounds.lower || r > bounds.upper) ++rejections;
            }
            map.beta[ipr * config.qs.size() + iq] =
                static_cast<double>(rejections) / static_cast<double>(config.trials);
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// CSV output.
// ---------------------------------------------------------------------------

inline void write_power_csv(const PowerGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "k,q,beta_decayed,beta_cumulative,delta\n";
    for (const auto& cell : grid.cells) {
        out << cell.k << ',' << detail::format_double(cell.q) << ','
            << detail::format_double(cell.beta_decayed) << ','
            << detail::format_double(cell.beta_cumulative) << ','
            << detail::format_double(cell.beta_decayed - cell.beta_cumulative) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_power_heatmap_csv(const PowerHeatmap& map,
                                    const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "p,q,beta_decayed\n";
    for (std::size_t ipr = 0; ipr < map.ps.size(); ++ipr)
        for (std::size_t iq = 0; iq < map.qs.size(); ++iq)
            out << detail::format_double(map.ps[ipr]) << ','
                << detail::format_double(map.qs[iq]) << ','
                << detail::format_double(map.at(ipr, iq)) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace driftwatch
