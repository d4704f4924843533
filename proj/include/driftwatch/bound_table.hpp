#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "driftwatch/rng.hpp"

// Monte-Carlo quantile bounds for the exponentially decayed rate statistic.
//
// Under a stable concept the decayed rate behaves like the weighted sum
//   R = (1 - eta) * sum_{i=1..n} eta^(n-i) * I_i,   I_i ~ iid Bernoulli(p).
// This module simulates that null, extracts two-sided empirical quantile
// bounds, and packs them into a dense lookup table over a (p, alpha, n)
// grid for a fixed eta. Tables are built once, persisted, and shared by
// every detector run; construction is deterministic for a given seed and
// independent of the number of worker threads.

namespace driftwatch {

struct GeomSumParams {
    double p_hat = 0.5;
    double eta = 0.9;
    std::uint32_t n = 1;

    void validate() const {
        if (!(p_hat >= 0.0 && p_hat <= 1.0))
            throw std::invalid_argument("GeomSumParams: p_hat must lie in [0, 1]");
        if (!(eta >= 0.0 && eta < 1.0))
            throw std::invalid_argument("GeomSumParams: eta must lie in [0, 1)");
        if (n < 1) throw std::invalid_argument("GeomSumParams: n must be >= 1");
    }
};

/// One draw of the n-term decayed Bernoulli sum, by iterating
/// r <- eta * r + (1 - eta) * I from r = 0. Exactly n indicator draws.
template <class Rng>
double simulate_geometric_sum(const GeomSumParams& params, Rng& rng) {
    params.validate();
    const double gain = 1.0 - params.eta;
    double r = 0.0;
    for (std::uint32_t i = 0; i < params.n; ++i) {
        r = params.eta * r + (rng.next_double() < params.p_hat ? gain : 0.0);
    }
    return r;
}

/// Two-sided empirical bounds: lower = alpha quantile, upper = (1 - alpha)
/// quantile of the simulated null.
struct QuantileBounds {
    double lower = 0.0;
    double upper = 0.0;
};

namespace detail {

/// 1-based order-statistic rank for quantile level q of m samples:
/// ceil(q * m), clamped into [1, m]. The small backoff undoes binary
/// representation noise (0.01 * 200000 evaluates just above 2000).
inline std::uint64_t quantile_rank(double q, std::uint64_t m) {
    const double t = q * static_cast<double>(m);
    double r = std::ceil(t - 1e-9);
    if (r < 1.0) r = 1.0;
    if (r > static_cast<double>(m)) r = static_cast<double>(m);
    return static_cast<std::uint64_t>(r);
}

/// Number of recurrence steps that matter: terms older than n_eff carry
/// total weight below 1e-20 and cannot move any double-precision quantile.
inline std::uint32_t effective_steps(double eta, std::uint32_t n) {
    if (eta <= 0.0) return 1;
    const double limit = std::ceil(std::log(1e-20) / std::log(eta));
    if (limit >= static_cast<double>(n)) return n;
    return static_cast<std::uint32_t>(limit);
}

/// Bulk sampler for the table builder. Draws two Bernoulli indicators per
/// RNG output by thresholding 32-bit halves, which quantizes p by at most
/// 2^-33 (orders of magnitude below Monte-Carlo resolution).
inline void sample_pure_sums(double p_hat, double eta, std::uint32_t n_eff,
                             Xoshiro256pp& rng, std::span<double> out) {
    const double gain = 1.0 - eta;
    std::uint64_t threshold =
        static_cast<std::uint64_t>(std::llround(p_hat * 4294967296.0));
    if (threshold > 0x100000000ull) threshold = 0x100000000ull;
    for (double& slot : out) {
        double r = 0.0;
        std::uint32_t steps = n_eff;
        while (steps >= 2) {
            const std::uint64_t x = rng.next();
            r = eta * r + ((x & 0xFFFFFFFFull) < threshold ? gain : 0.0);
            r = eta * r + ((x >> 32) < threshold ? gain : 0.0);
            steps -= 2;
        }
        if (steps != 0) {
            const std::uint64_t x = rng.next();
            r = eta * r + ((x & 0xFFFFFFFFull) < threshold ? gain : 0.0);
        }
        slot = r;
    }
}

/// Places the order statistics at the given ascending 1-based ranks.
/// Permutes v; out[i] receives the ranks[i]-th smallest element.
inline void select_order_stats(std::vector<double>& v,
                               std::span<const std::uint64_t> ranks,
                               std::span<double> out) {
    std::size_t done = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        const std::size_t pos = static_cast<std::size_t>(ranks[i] - 1);
        if (pos >= done) {
            std::nth_element(v.begin() + static_cast<std::ptrdiff_t>(done),
                             v.begin() + static_cast<std::ptrdiff_t>(pos), v.end());
            done = pos + 1;
        }
        out[i] = v[pos];
    }
}

/// Pool-adjacent-violators projection onto nondecreasing sequences
/// (least squares, equal weights). In-place, deterministic.
inline void isotonic_increasing(std::span<double> y) {
    struct Block {
        double sum;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (double value : y) {
        Block cur{value, 1};
        while (!blocks.empty() &&
               blocks.back().sum * static_cast<double>(cur.count) >
                   cur.sum * static_cast<double>(blocks.back().count)) {
            cur.sum += blocks.back().sum;
            cur.count += blocks.back().count;
            blocks.pop_back();
        }
        blocks.push_back(cur);
    }
    std::size_t i = 0;
    for (const Block& b : blocks) {
        const double mean = b.sum / static_cast<double>(b.count);
        for (std::size_t j = 0; j < b.count; ++j) y[i++] = mean;
    }
}

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const char* data, std::size_t n) {
        bytes_.insert(bytes_.end(), data, data + n);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(char* out, std::size_t n) {
        need(n);
        std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out);
        pos_ += n;
    }
    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            throw std::runtime_error("bound table: file truncated or corrupt");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace detail

/// Empirical two-sided bounds for one parameter point, one alpha.
inline QuantileBounds estimate_bounds(const GeomSumParams& params, double alpha,
                                      std::uint64_t mc_samples, std::uint64_t seed);

/// Shared-sample variant: all alphas are cut from the same mc_samples
/// draws, so the returned intervals are exactly nested (smaller alpha,
/// wider interval).
inline std::vector<QuantileBounds> estimate_bounds(const GeomSumParams& params,
                                                   std::span<const double> alphas,
                                                   std::uint64_t mc_samples,
                                                   std::uint64_t seed) {
    params.validate();
    if (mc_samples < 1000)
        throw std::invalid_argument("estimate_bounds: mc_samples must be >= 1000");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 0.5))
            throw std::invalid_argument("estimate_bounds: alpha must lie in (0, 0.5)");
    }

    std::vector<double> draws(mc_samples);
    Xoshiro256pp rng(seed);
    detail::sample_pure_sums(params.p_hat, params.eta,
                             detail::effective_steps(params.eta, params.n), rng,
                             draws);

    std::vector<std::uint64_t> ranks;
    ranks.reserve(alphas.size() * 2);
    for (double a : alphas) ranks.push_back(detail::quantile_rank(a, mc_samples));
    for (double a : alphas) ranks.push_back(detail::quantile_rank(1.0 - a, mc_samples));
    std::vector<std::uint64_t> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> values(sorted.size());
    detail::select_order_stats(draws, sorted, values);

    auto value_at = [&](std::uint64_t rank) {
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), rank);
        return values[static_cast<std::size_t>(it - sorted.begin())];
    };
    std::vector<QuantileBounds> result(alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        result[i].lower = value_at(ranks[i]);
        result[i].upper = value_at(ranks[alphas.size() + i]);
    }
    return result;
}

inline QuantileBounds estimate_bounds(const GeomSumParams& params, double alpha,
                                      std::uint64_t mc_samples, std::uint64_t seed) {
    const double alphas[1] = {alpha};
    return estimate_bounds(params, std::span<const double>(alphas, 1), mc_samples,
                           seed)[0];
}

/// Axis layout for a table build. Alphas are the significance levels the
/// table will answer for (exactly; lookups never interpolate alpha).
struct BoundTableSpec {
    std::vector<double> alphas;
    std::vector<double> p_hats;
    std::vector<std::uint32_t> ns;

    void validate() const {
        auto strictly_increasing = [](const auto& v) {
            for (std::size_t i = 1; i < v.size(); ++i)
                if (!(v[i] > v[i - 1])) return false;
            return true;
        };
        if (alphas.empty() || p_hats.empty() || ns.empty())
            throw std::invalid_argument("BoundTableSpec: all axes must be nonempty");
        if (!strictly_increasing(alphas) || !strictly_increasing(p_hats) ||
            !strictly_increasing(ns))
            throw std::invalid_argument(
                "BoundTableSpec: axes must be strictly increasing");
        for (double a : alphas)
            if (!(a > 0.0 && a < 0.5))
                throw std::invalid_argument("BoundTableSpec: alphas must lie in (0, 0.5)");
        if (!(p_hats.front() >= 0.0 && p_hats.back() <= 1.0))
            throw std::invalid_argument("BoundTableSpec: p_hats must lie in [0, 1]");
        if (ns.front() < 1)
            throw std::invalid_argument("BoundTableSpec: ns must be >= 1");
    }
};

/// The standard grid: p from 0 to 1 in steps of 0.01, n doubling from 2
/// to 2048 (lookups saturate above), caller-chosen alphas.
inline BoundTableSpec default_table_spec(std::vector<double> alphas) {
    BoundTableSpec spec;
    std::sort(alphas.begin(), alphas.end());
    spec.alphas = std::move(alphas);
    spec.p_hats.reserve(101);
    for (int i = 0; i <= 100; ++i) spec.p_hats.push_back(static_cast<double>(i) / 100.0);
    for (std::uint32_t n = 2; n <= 2048; n *= 2) spec.ns.push_back(n);
    return spec;
}

/// Dense, immutable bound table for one eta. Self-describing on disk;
/// save/load round-trips bit for bit.
class BoundTable {
public:
    BoundTable() = default;

    BoundTable(double eta, std::uint64_t mc_samples, std::uint64_t mc_samples_used,
               std::uint64_t seed, std::vector<double> alphas,
               std::vector<double> p_hats, std::vector<std::uint32_t> ns,
               std::vector<double> lower, std::vector<double> upper)
        : eta_(eta),
          mc_samples_(mc_samples),
          mc_samples_used_(mc_samples_used),
          seed_(seed),
          alphas_(std::move(alphas)),
          p_hats_(std::move(p_hats)),
          ns_(std::move(ns)),
          lower_(std::move(lower)),
          upper_(std::move(upper)) {
        BoundTableSpec spec{alphas_, p_hats_, ns_};
        spec.validate();
        if (!(eta_ >= 0.0 && eta_ < 1.0))
            throw std::invalid_argument("BoundTable: eta must lie in [0, 1)");
        const std::size_t cells = alphas_.size() * p_hats_.size() * ns_.size();
        if (lower_.size() != cells || upper_.size() != cells)
            throw std::invalid_argument("BoundTable: cell count does not match axes");
    }

    bool empty() const noexcept { return lower_.empty(); }
    double eta() const noexcept { return eta_; }
    std::uint64_t mc_samples() const noexcept { return mc_samples_; }
    std::uint64_t mc_samples_used() const noexcept { return mc_samples_used_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& p_hats() const noexcept { return p_hats_; }
    const std::vector<std::uint32_t>& ns() const noexcept { return ns_; }

    /// Index of alpha on the axis; an alpha that is not (numerically) on
    /// the axis is a configuration error, never an interpolation.
    std::size_t alpha_index(double alpha) const {
        for (std::size_t i = 0; i < alphas_.size(); ++i) {
            const double scale = std::max(std::abs(alpha), std::abs(alphas_[i]));
            if (std::abs(alphas_[i] - alpha) <= 1e-12 * scale) return i;
        }
        throw std::invalid_argument("BoundTable: alpha " + std::to_string(alpha) +
                                    " is not on the table's alpha axis");
    }

    /// Nearest grid index for an observed rate estimate; ties snap down.
    std::size_t snap_p_index(double p_hat) const noexcept {
        return nearest_index(p_hats_, p_hat);
    }

    /// Nearest grid index for a sample size; ties snap down and values
    /// beyond the last grid point saturate to it.
    std::size_t snap_n_index(std::uint64_t n) const noexcept {
        return nearest_index_n(ns_, n);
    }

    /// Bounds for (p_hat, alpha, n) after snapping p_hat and n to the
    /// grid. Note the endpoint cells of a [0, 1] p axis are degenerate
    /// (the null has no spread at p = 0 or 1), so rates sustained within
    /// half a grid step of those endpoints effectively always signal.
    QuantileBounds lookup(double p_hat, double alpha, std::uint64_t n) const {
        const std::size_t ia = alpha_index(alpha);
        const std::size_t ip = snap_p_index(p_hat);
        const std::size_t in = snap_n_index(n);
        return cell(ia, ip, in);
    }

    QuantileBounds cell(std::size_t ia, std::size_t ip, std::size_t in) const {
        const std::size_t idx = (ia * p_hats_.size() + ip) * ns_.size() + in;
        return {lower_[idx], upper_[idx]};
    }

    /// Bounds for a statistic that is a pure n_terms-step decayed sum.
    /// The sparse n axis cannot represent every term count, and the sum
    /// is stochastically increasing in its length, so snapping to a
    /// single nearest cell can hand a shorter null's upper bound (below
    /// the longer statistic's own reachable maximum) to the test, which
    /// then rejects on runs of correct predictions right after a reset.
    /// Bracketing avoids that: the lower bound comes from the nearest
    /// axis point at or below n_terms and the upper bound from the
    /// nearest at or above, each side falling back to the axis end when
    /// n_terms lies outside the grid. Both choices widen the acceptance
    /// region, so the realized test size never exceeds the nominal level
    /// on account of the n axis. On-axis counts reduce to plain lookup.
    QuantileBounds bracket(double p_hat, double alpha,
                           std::uint64_t n_terms) const {
        const std::size_t ia = alpha_index(alpha);
        const std::size_t ip = snap_p_index(p_hat);
        const auto [ifloor, iceil] = bracket_n_indices(n_terms);
        return {cell(ia, ip, ifloor).lower, cell(ia, ip, iceil).upper};
    }

    /// Indices of the n-axis points at or below / at or above n_terms,
    /// clamped to the axis ends.
    std::pair<std::size_t, std::size_t>
    bracket_n_indices(std::uint64_t n_terms) const noexcept {
        const auto lo = std::lower_bound(ns_.begin(), ns_.end(), n_terms);
        if (lo == ns_.end()) {
            const std::size_t last = ns_.size() - 1;
            return {last, last};
        }
        const std::size_t iceil = static_cast<std::size_t>(lo - ns_.begin());
        if (*lo == n_terms || iceil == 0) return {iceil, iceil};
        return {iceil - 1, iceil};
    }

    std::vector<std::uint8_t> serialize() const {
        detail::ByteWriter w;
        w.raw(kMagic, 8);
        w.u32(kVersion);
        w.f64(eta_);
        w.u64(mc_samples_);
        w.u64(mc_samples_used_);
        w.u64(seed_);
        w.u32(static_cast<std::uint32_t>(alphas_.size()));
        w.u32(static_cast<std::uint32_t>(p_hats_.size()));
        w.u32(static_cast<std::uint32_t>(ns_.size()));
        for (double a : alphas_) w.f64(a);
        for (double p : p_hats_) w.f64(p);
        for (std::uint32_t n : ns_) w.u32(n);
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            w.f64(lower_[i]);
            w.f64(upper_[i]);
        }
        return w.take();
    }

    static BoundTable deserialize(std::span<const std::uint8_t> bytes) {
        detail::ByteReader r(bytes);
        char magic[8];
        r.raw(magic, 8);
        if (!std::equal(magic, magic + 8, kMagic))
            throw std::runtime_error("bound table: bad magic (not a bound table file)");
        const std::uint32_t version = r.u32();
        if (version != kVersion)
            throw std::runtime_error("bound table: unsupported version " +
                                     std::to_string(version));
        const double eta = r.f64();
        const std::uint64_t mc = r.u64();
        const std::uint64_t mc_used = r.u64();
        const std::uint64_t seed = r.u64();
        const std::uint32_t na = r.u32();
        const std::uint32_t np = r.u32();
        const std::uint32_t nn = r.u32();
        std::vector<double> alphas(na), p_hats(np);
        std::vector<std::uint32_t> ns(nn);
        for (auto& a : alphas) a = r.f64();
        for (auto& p : p_hats) p = r.f64();
        for (auto& n : ns) n = r.u32();
        const std::size_t cells =
            static_cast<std::size_t>(na) * np * nn;
        std::vector<double> lower(cells), upper(cells);
        for (std::size_t i = 0; i < cells; ++i) {
            lower[i] = r.f64();
            upper[i] = r.f64();
        }
        if (!r.exhausted())
            throw std::runtime_error("bound table: trailing bytes after payload");
        return BoundTable(eta, mc, mc_used, seed, std::move(alphas), std::move(p_hats),
                          std::move(ns), std::move(lower), std::move(upper));
    }

    void save(const std::filesystem::path& path) const {
        const auto bytes = serialize();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("bound table: cannot open " + path.string() +
                                           " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("bound table: write failed: " + path.string());
    }

    static BoundTable load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("bound table: cannot open " + path.string());
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        return deserialize(bytes);
    }

    /// FNV-1a over the serialized bytes, as 16 hex digits. Identifies a
    /// table in run manifests.
    std::string fingerprint() const {
        const auto bytes = serialize();
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a64(bytes)));
        return std::string(buf, 16);
    }

private:
    static constexpr char kMagic[9] = "DWBT0001";
    static constexpr std::uint32_t kVersion = 1;

    template <typename T>
    static std::size_t nearest_index(const std::vector<T>& axis, double value) noexcept {
        auto it = std::lower_bound(axis.begin(), axis.end(), value);
        if (it == axis.begin()) return 0;
        if (it == axis.end()) return axis.size() - 1;
        const std::size_t hi = static_cast<std::size_t>(it - axis.begin());
        const std::size_t lo = hi - 1;
        const double d_lo = value - static_cast<double>(axis[lo]);
        const double d_hi = static_cast<double>(axis[hi]) - value;
        return d_hi < d_lo ? hi : lo;
    }

    static std::size_t nearest_index_n(const std::vector<std::uint32_t>& axis,
                                       std::uint64_t n) noexcept {
        auto it = std::lower_bound(axis.begin(), axis.end(), n);
        if (it == axis.begin()) return 0;
        if (it == axis.end()) return axis.size() - 1;
        const std::size_t hi = static_cast<std::size_t>(it - axis.begin());
        const std::size_t lo = hi - 1;
        const std::uint64_t d_lo = n - axis[lo];
        const std::uint64_t d_hi = axis[hi] - n;
        return d_hi < d_lo ? hi : lo;
    }

    double eta_ = 0.9;
    std::uint64_t mc_samples_ = 0;
    std::uint64_t mc_samples_used_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> alphas_;
    std::vector<double> p_hats_;
    std::vector<std::uint32_t> ns_;
    std::vector<double> lower_;
    std::vector<double> upper_;
};

/// Builds the full table. Work is sharded over (p, n) cells; each cell
/// seeds its own RNG stream from (seed, cell index), so the result is
/// identical for any thread count. All alphas share each cell's draws,
/// which both saves the dominant cost and makes smaller-alpha bounds
/// enclose larger-alpha bounds exactly.
///
/// If the smallest alpha would leave fewer than 10 samples beyond a
/// bound, the sample count is escalated to ceil(10 / alpha) for every
/// cell and a warning is printed (tail quantiles from a handful of
/// samples are meaningless).
inline BoundTable build_table(const BoundTableSpec& spec, double eta,
                              std::uint64_t mc_samples, std::uint64_t seed,
                              unsigned threads = 0) {
    spec.validate();
    if (!(eta >= 0.0 && eta < 1.0))
        throw std::invalid_argument("build_table: eta must lie in [0, 1)");
    if (mc_samples < 1000)
        throw std::invalid_argument("build_table: mc_samples must be >= 1000");

    std::uint64_t mc_used = mc_samples;
    for (double a : spec.alphas) {
        const auto needed = static_cast<std::uint64_t>(std::ceil(10.0 / a));
        if (a * static_cast<double>(mc_samples) < 10.0 && needed > mc_used)
            mc_used = needed;
    }
    if (mc_used != mc_samples) {
        std::fprintf(stderr,
                     "warning: bound table: mc_samples=%llu leaves fewer than 10 tail "
                     "samples at alpha=%g; escalating to %llu draws per cell\n",
                     static_cast<unsigned long long>(mc_samples), spec.alphas.front(),
                     static_cast<unsigned long long>(mc_used));
    }

    const std::size_t na = spec.alphas.size();
    const std::size_t np = spec.p_hats.size();
    const std::size_t nn = spec.ns.size();
    const std::size_t cells = np * nn;
    std::vector<double> lower(na * cells), upper(na * cells);

    // Rank layout shared by every cell: lower ranks for each alpha, then
    // upper ranks, selected in ascending order.
    std::vector<std::uint64_t> ranks;
    ranks.reserve(2 * na);
    for (double a : spec.alphas) ranks.push_back(detail::quantile_rank(a, mc_used));
    for (double a : spec.alphas)
        ranks.push_back(detail::quantile_rank(1.0 - a, mc_used));
    std::vector<std::uint64_t> sorted_ranks = ranks;
    std::sort(sorted_ranks.begin(), sorted_ranks.end());

    unsigned worker_count = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    if (static_cast<std::size_t>(worker_count) > cells)
        worker_count = static_cast<unsigned>(cells);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        std::vector<double> draws(mc_used);
        std::vector<double> values(sorted_ranks.size());
        for (;;) {
            const std::size_t cell = next.fetch_add(1, std::memory_order_relaxed);
            if (cell >= cells) break;
            const std::size_t ip = cell / nn;
            const std::size_t in = cell % nn;
            Xoshiro256pp rng(derive_seed(seed, cell));
            detail::sample_pure_sums(spec.p_hats[ip], eta,
                                     detail::effective_steps(eta, spec.ns[in]), rng,
                                     draws);
            detail::select_order_stats(draws, sorted_ranks, values);
            auto value_at = [&](std::uint64_t rank) {
                const auto it =
                    std::lower_bound(sorted_ranks.begin(), sorted_ranks.end(), rank);
                return values[static_cast<std::size_t>(it - sorted_ranks.begin())];
            };
            for (std::size_t ia = 0; ia < na; ++ia) {
                const std::size_t idx = (ia * np + ip) * nn + in;
                lower[idx] = value_at(ranks[ia]);
                upper[idx] = value_at(ranks[na + ia]);
            }
        }
    };

    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (unsigned i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Both bound surfaces are monotone in the true rate; project each
    // (alpha, n) slice onto nondecreasing-in-p to remove MC wiggles.
    std::vector<double> slice(np);
    for (std::size_t ia = 0; ia < na; ++ia) {
        for (std::size_t in = 0; in < nn; ++in) {
            for (auto* surface : {&lower, &upper}) {
                for (std::size_t ip = 0; ip < np; ++ip)
                    slice[ip] = (*surface)[(ia * np + ip) * nn + in];
                detail::isotonic_increasing(slice);
                for (std::size_t ip = 0; ip < np; ++ip)
                    (*surface)[(ia * np + ip) * nn + in] = slice[ip];
            }
        }
    }

    return BoundTable(eta, mc_samples, mc_used, seed, spec.alphas, spec.p_hats,
                      spec.ns, std::move(lower), std::move(upper));
}

} // namespace driftwatch
