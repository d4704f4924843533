#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string_view>

#include "driftwatch/bound_table.hpp"
#include "driftwatch/normal.hpp"
#include "driftwatch/rates.hpp"

// Streaming drift detectors behind one interface.
//
// All four detectors consume (y, yhat) pairs one at a time, raise a
// warning zone before committing to a drift signal, and re-arm themselves
// after each drift so a single pass covers a whole stream. The stream
// clock t never resets; only monitoring state does.

namespace driftwatch {

enum class DriftStatus { Stable, Warning, Drift };

inline constexpr std::string_view status_name(DriftStatus s) noexcept {
    switch (s) {
        case DriftStatus::Stable: return "stable";
        case DriftStatus::Warning: return "warning";
        default: return "drift";
    }
}

/// [begin, end]: first step of the warning zone that led to a drift
/// signal, and the signal step itself. A drift with no preceding warning
/// collapses to [end, end].
struct WarnWindow {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

struct StepOutcome {
    DriftStatus status = DriftStatus::Stable;
    /// Rates whose statistic sits outside its bounds this step (detect
    /// bounds on a Drift step, warn bounds on a Warning step). Empty for
    /// detectors that do not monitor per-rate statistics.
    PerRate<bool> triggered{};
    /// Present on Drift steps only.
    std::optional<WarnWindow> window{};
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual StepOutcome step(int y, int yhat) = 0;
    /// Back to the initial monitoring state. The stream clock keeps
    /// counting; this is also what a detector applies to itself after
    /// signalling a drift.
    virtual void reset() = 0;
    virtual std::string_view name() const noexcept = 0;
    virtual std::uint64_t time() const noexcept = 0;
};

// ---------------------------------------------------------------------------
// Decayed-rate bookkeeping shared by the table-driven detector and by
// trajectory dumps.
// ---------------------------------------------------------------------------

/// Tracks, per rate: smoothed confusion counts, the empirical estimate
/// P^, and the exponentially decayed running rate R (initialised at 0.5,
/// updated only when an observation influences that rate).
///
/// The decayed rate after k influenced steps satisfies
///   R = eta^k * 0.5 + (1 - eta) * sum_{i=1..k} eta^(k-i) * I_i
/// exactly, so subtracting the decaying initial term maps R onto the
/// same scale as the simulated null (which sums from zero). That
/// corrected value is what gets compared against table bounds; without
/// the correction every fresh monitor would sit outside the null support
/// for small k and signal immediately.
class LfrMonitor {
public:
    explicit LfrMonitor(PerRate<double> eta) : eta_(eta) {
        for (RateKind k : all_rates) {
            if (!(eta_[k] >= 0.0 && eta_[k] < 1.0))
                throw std::invalid_argument("LfrMonitor: eta must lie in [0, 1)");
        }
        reset();
    }

    void reset() noexcept {
        counts_.reset();
        r_ = PerRate<double>::filled(0.5);
        init_decay_ = PerRate<double>::filled(1.0);
    }

    void observe(int y, int yhat) {
        const auto touched = influenced_rates(y, yhat);
        counts_.add(yhat, y);
        const bool correct = y == yhat;
        for (RateKind k : touched) {
            r_[k] = decayed_update(r_[k], eta_[k], correct);
            init_decay_[k] *= eta_[k];
        }
    }

    const ConfusionCounts& counts() const noexcept { return counts_; }
    double eta(RateKind k) const noexcept { return eta_[k]; }

    /// The textbook decayed rate, initial value 0.5.
    double decayed_rate(RateKind k) const noexcept { return r_[k]; }

    /// R with the decayed initial value removed; on the null's scale.
    double corrected_rate(RateKind k) const noexcept {
        return r_[k] - init_decay_[k] * 0.5;
    }

    double rate_estimate(RateKind k) const noexcept { return counts_.rate(k); }
    std::uint64_t denominator(RateKind k) const noexcept {
        return counts_.denominator(k);
    }
    /// Influenced observations since the last reset (= denominator - 2).
    std::uint64_t influenced_count(RateKind k) const noexcept {
        return counts_.denominator(k) - 2;
    }

private:
    PerRate<double> eta_;
    ConfusionCounts counts_;
    PerRate<double> r_;
    PerRate<double> init_decay_;
};

// ---------------------------------------------------------------------------
// Table-driven detector on all four rates.
// ---------------------------------------------------------------------------

struct LfrParams {
    PerRate<double> eta = PerRate<double>::filled(0.9);
    /// Warning significance per rate (the larger level).
    PerRate<double> warn_level = PerRate<double>::filled(1e-2);
    /// Drift significance per rate (the smaller, rarer level).
    PerRate<double> detect_level = PerRate<double>::filled(1e-5);

    void validate() const {
        for (RateKind k : all_rates) {
            if (!(eta[k] >= 0.0 && eta[k] < 1.0))
                throw std::invalid_argument("LfrParams: eta must lie in [0, 1)");
            if (!(detect_level[k] > 0.0 && detect_level[k] < warn_level[k] &&
                  warn_level[k] < 0.5))
                throw std::invalid_argument(
                    "LfrParams: need 0 < detect_level < warn_level < 0.5");
        }
    }
};

class LfrDetector final : public Detector {
public:
    LfrDetector(const LfrParams& params, const BoundTable& table)
        : params_(params), table_(&table), monitor_(params.eta) {
        params_.validate();
        if (table.empty()) throw std::invalid_argument("LfrDetector: empty bound table");
        for (RateKind k : all_rates) {
            if (params_.eta[k] != table.eta())
                throw std::invalid_argument(
                    "LfrDetector: eta does not match the bound table's eta; build a "
                    "table for this eta");
            // Both levels must sit on the table's alpha axis; alpha_index
            // throws a descriptive error otherwise, before any data flows.
            warn_alpha_[k] = table.alpha_index(params_.warn_level[k]);
            detect_alpha_[k] = table.alpha_index(params_.detect_level[k]);
        }
    }

    StepOutcome step(int y, int yhat) override {
        ++t_;
        monitor_.observe(y, yhat);

        PerRate<bool> warn_hit{}, detect_hit{};
        bool any_warn = false, any_detect = false;
        for (RateKind k : all_rates) {
            last_decayed_[k] = monitor_.decayed_rate(k);
            last_estimate_[k] = monitor_.rate_estimate(k);
            // The corrected statistic is a pure sum over the rate's
            // influenced steps, so the null is keyed by that term count
            // and consumed through the bracketing accessor: a nearest
            // snap on the sparse n axis can pair a short null's upper
            // bound with a longer statistic and then reject on nothing
            // but correct predictions shortly after a reset.
            const double stat = monitor_.corrected_rate(k);
            const std::size_t ip = table_->snap_p_index(last_estimate_[k]);
            const auto [inlo, inhi] =
                table_->bracket_n_indices(monitor_.influenced_count(k));
            const QuantileBounds warn_b{
                table_->cell(warn_alpha_[k], ip, inlo).lower,
                table_->cell(warn_alpha_[k], ip, inhi).upper};
            if (stat < warn_b.lower || stat > warn_b.upper) {
                warn_hit[k] = true;
                any_warn = true;
                const QuantileBounds det_b{
                    table_->cell(detect_alpha_[k], ip, inlo).lower,
                    table_->cell(detect_alpha_[k], ip, inhi).upper};
                if (stat < det_b.lower || stat > det_b.upper) {
                    detect_hit[k] = true;
                    any_detect = true;
                }
            }
        }

        if (any_warn) {
            if (warn_time_ == 0) warn_time_ = t_;
        } else {
            warn_time_ = 0;
        }

        StepOutcome out;
        if (any_detect) {
            out.status = DriftStatus::Drift;
            out.triggered = detect_hit;
            out.window = WarnWindow{warn_time_, t_};
            reset();
            return out;
        }
        if (warn_time_ != 0) {
            out.status = DriftStatus::Warning;
            out.triggered = warn_hit;
        }
        return out;
    }

    void reset() override {
        monitor_.reset();
        warn_time_ = 0;
    }

    std::string_view name() const noexcept override { return "lfr"; }
    std::uint64_t time() const noexcept override { return t_; }
    std::uint64_t warn_time() const noexcept { return warn_time_; }
    const LfrMonitor& monitor() const noexcept { return monitor_; }
    const LfrParams& params() const noexcept { return params_; }

    /// Decayed rate as it stood when the last step was evaluated. Unlike
    /// monitor(), these survive the self-reset that follows a drift signal,
    /// so a trace of the stream shows the excursion rather than 0.5.
    double last_decayed_rate(RateKind k) const noexcept { return last_decayed_[k]; }
    double last_rate_estimate(RateKind k) const noexcept { return last_estimate_[k]; }

private:
    LfrParams params_;
    const BoundTable* table_;
    LfrMonitor monitor_;
    PerRate<std::size_t> warn_alpha_{}, detect_alpha_{};
    PerRate<double> last_decayed_ = PerRate<double>::filled(0.5);
    PerRate<double> last_estimate_ = PerRate<double>::filled(0.5);
    std::uint64_t t_ = 0;
    std::uint64_t warn_time_ = 0;
};

// ---------------------------------------------------------------------------
// Normal-approximation detector on the cumulative rate estimates.
// ---------------------------------------------------------------------------

struct NfrParams {
    PerRate<double> warn_level = PerRate<double>::filled(0.025);
    PerRate<double> detect_level = PerRate<double>::filled(1e-3);

    void validate() const {
        for (RateKind k : all_rates) {
            if (!(detect_level[k] > 0.0 && detect_level[k] < warn_level[k] &&
                  warn_level[k] < 0.5))
                throw std::invalid_argument(
                    "NfrParams: need 0 < detect_level < warn_level < 0.5");
        }
    }
};

/// Tests each rate's current estimate P^ against a two-sided normal band
/// centred on the running mean P- of its past estimates:
///   P- +/- z_(1-level) * sqrt(P-(1 - P-) / N).
/// P- is clamped into [1/(N+2), 1 - 1/(N+2)] first so the band never
/// collapses. Each observation folds the two influenced estimates into
/// their running means after the test.
class NfrDetector final : public Detector {
public:
    explicit NfrDetector(const NfrParams& params) : params_(params) {
        params_.validate();
        for (RateKind k : all_rates) {
            z_warn_[k] = inverse_normal_cdf(1.0 - params_.warn_level[k]);
            z_detect_[k] = inverse_normal_cdf(1.0 - params_.detect_level[k]);
        }
        reset();
    }

    StepOutcome step(int y, int yhat) override {
        ++t_;
        const auto touched = influenced_rates(y, yhat);
        counts_.add(yhat, y);

        PerRate<bool> warn_hit{}, detect_hit{};
        bool any_warn = false, any_detect = false;
        for (RateKind k : all_rates) {
            const double n = static_cast<double>(counts_.denominator(k));
            const double lo = 1.0 / (n + 2.0);
            const double centre = std::clamp(p_bar_[k], lo, 1.0 - lo);
            const double sd = std::sqrt(centre * (1.0 - centre) / n);
            const double dev = std::abs(counts_.rate(k) - centre);
            if (dev > z_warn_[k] * sd) {
                warn_hit[k] = true;
                any_warn = true;
                if (dev > z_detect_[k] * sd) {
                    detect_hit[k] = true;
                    any_detect = true;
                }
            }
        }

        if (any_warn) {
            if (warn_time_ == 0) warn_time_ = t_;
        } else {
            warn_time_ = 0;
        }

        StepOutcome out;
        if (any_detect) {
            out.status = DriftStatus::Drift;
            out.triggered = detect_hit;
            out.window = WarnWindow{warn_time_, t_};
            reset();
            return out;
        }
        for (RateKind k : touched) {
            ++folds_[k];
            p_bar_[k] += (counts_.rate(k) - p_bar_[k]) / static_cast<double>(folds_[k]);
        }
        if (warn_time_ != 0) {
            out.status = DriftStatus::Warning;
            out.triggered = warn_hit;
        }
        return out;
    }

    void reset() override {
        counts_.reset();
        p_bar_ = PerRate<double>::filled(0.5);
        folds_ = PerRate<std::uint64_t>{};
        warn_time_ = 0;
    }

    std::string_view name() const noexcept override { return "nfr"; }
    std::uint64_t time() const noexcept override { return t_; }
    double running_mean(RateKind k) const noexcept { return p_bar_[k]; }
    std::uint64_t fold_count(RateKind k) const noexcept { return folds_[k]; }
    const ConfusionCounts& counts() const noexcept { return counts_; }

private:
    NfrParams params_;
    PerRate<double> z_warn_{}, z_detect_{};
    ConfusionCounts counts_;
    PerRate<double> p_bar_ = PerRate<double>::filled(0.5);
    PerRate<std::uint64_t> folds_{};
    std::uint64_t t_ = 0;
    std::uint64_t warn_time_ = 0;
};

// ---------------------------------------------------------------------------
// Error-rate detector (overall misclassification rate).
// ---------------------------------------------------------------------------

struct DdmParams {
    double warn_mult = 2.0;
    double detect_mult = 3.0;
    /// Observations required (per concept) before levels are evaluated.
    std::uint32_t min_observations = 30;

    void validate() const {
        if (!(warn_mult > 0.0 && detect_mult > warn_mult))
            throw std::invalid_argument("DdmParams: need 0 < warn_mult < detect_mult");
        if (min_observations < 1)
            throw std::invalid_argument("DdmParams: min_observations must be >= 1");
    }
};

/// Tracks the cumulative error rate p and its binomial deviation s,
/// remembers the best (p + s) seen, and signals when the current level
/// degrades past p_min + mult * s_min.
class DdmDetector final : public Detector {
public:
    explicit DdmDetector(const DdmParams& params = {}) : params_(params) {
        params_.validate();
        reset();
    }

    StepOutcome step(int y, int yhat) override {
        detail::check_label(y, "y");
        detail::check_label(yhat, "yhat");
        ++t_;
        ++n_;
        errors_ += (y != yhat) ? 1 : 0;
        const double n = static_cast<double>(n_);
        const double p = static_cast<double>(errors_) / n;
        const double s = std::sqrt(p * (1.0 - p) / n);

        bool warn_now = false, detect_now = false;
        if (n_ >= params_.min_observations) {
            if (p + s < p_min_ + s_min_) {
                p_min_ = p;
                s_min_ = s;
            }
            // Strictly past the threshold: with a perfect record s_min is
            // exactly 0 and a >= comparison would signal on level == minimum.
            const double level = p + s;
            warn_now = level > p_min_ + params_.warn_mult * s_min_;
            detect_now = level > p_min_ + params_.detect_mult * s_min_;
        }
        return resolve(warn_now, detect_now, PerRate<bool>{});
    }

    void reset() override {
        n_ = 0;
        errors_ = 0;
        p_min_ = std::numeric_limits<double>::infinity();
        s_min_ = std::numeric_limits<double>::infinity();
        warn_time_ = 0;
    }

    std::string_view name() const noexcept override { return "ddm"; }
    std::uint64_t time() const noexcept override { return t_; }
    double error_rate() const noexcept {
        return n_ == 0 ? 0.0 : static_cast<double>(errors_) / static_cast<double>(n_);
    }
    std::uint64_t observations() const noexcept { return n_; }

protected:
    StepOutcome resolve(bool warn_now, bool detect_now, PerRate<bool> triggered) {
        if (warn_now) {
            if (warn_time_ == 0) warn_time_ = t_;
        } else {
            warn_time_ = 0;
        }
        StepOutcome out;
        if (detect_now) {
            out.status = DriftStatus::Drift;
            out.triggered = triggered;
            out.window = WarnWindow{warn_time_ != 0 ? warn_time_ : t_, t_};
            reset();
            return out;
        }
        if (warn_time_ != 0) {
            out.status = DriftStatus::Warning;
            out.triggered = triggered;
        }
        return out;
    }

    DdmParams params_;
    std::uint64_t t_ = 0;
    std::uint64_t n_ = 0;
    std::uint64_t errors_ = 0;
    double p_min_ = std::numeric_limits<double>::infinity();
    double s_min_ = std::numeric_limits<double>::infinity();
    std::uint64_t warn_time_ = 0;
};

// ---------------------------------------------------------------------------
// Minority-recall detector (decayed recall on the positive class).
// ---------------------------------------------------------------------------

struct DdmOciParams {
    double eta = 0.9;
    double warn_mult = 10.0;
    double detect_mult = 20.0;
    /// Minority-class observations required before levels are evaluated.
    std::uint32_t min_minority = 30;

    void validate() const {
        if (!(eta >= 0.0 && eta < 1.0))
            throw std::invalid_argument("DdmOciParams: eta must lie in [0, 1)");
        if (!(warn_mult > 0.0 && detect_mult > warn_mult))
            throw std::invalid_argument(
                "DdmOciParams: need 0 < warn_mult < detect_mult");
        if (min_minority < 1)
            throw std::invalid_argument("DdmOciParams: min_minority must be >= 1");
    }
};

/// Decayed recall R on the positive (assumed minority) class, updated
/// only on y = 1 steps, with s = sqrt(R(1-R)/N+). Mirrors the error-rate
/// scheme on the recall deficit d = 1 - R: remembers the best (smallest)
/// deficit-plus-spread d_min + s_min and signals once the recall sinks so
/// far that even credited with mult standard errors of the current
/// estimate it stays below that best, i.e. d - mult * s > d_min + s_min.
/// The margin therefore scales with the current s, which tightens as
/// minority observations accumulate and widens again after every reset.
/// Steps with y = 0 leave the statistic, and hence the zone, unchanged.
class DdmOciDetector final : public Detector {
public:
    explicit DdmOciDetector(const DdmOciParams& params = {}) : params_(params) {
        params_.validate();
        reset();
    }

    StepOutcome step(int y, int yhat) override {
        detail::check_label(y, "y");
        detail::check_label(yhat, "yhat");
        ++t_;
        if (y != 1) {
            StepOutcome out;
            if (warn_time_ != 0) {
                out.status = DriftStatus::Warning;
                out.triggered[RateKind::tpr] = true;
            }
            return out;
        }

        ++k_;
        r_ = decayed_update(r_, params_.eta, y == yhat);
        const double s = std::sqrt(r_ * (1.0 - r_) / static_cast<double>(k_));
        const double d = 1.0 - r_;

        bool warn_now = false, detect_now = false;
        if (k_ >= params_.min_minority) {
            if (d + s < d_min_ + s_min_) {
                d_min_ = d;
                s_min_ = s;
            }
            const double best = d_min_ + s_min_;
            warn_now = d - params_.warn_mult * s > best;
            detect_now = d - params_.detect_mult * s > best;
        }

        if (warn_now) {
            if (warn_time_ == 0) warn_time_ = t_;
        } else {
            warn_time_ = 0;
        }
        StepOutcome out;
        if (detect_now) {
            out.status = DriftStatus::Drift;
            out.triggered[RateKind::tpr] = true;
            out.window = WarnWindow{warn_time_ != 0 ? warn_time_ : t_, t_};
            reset();
            return out;
        }
        if (warn_time_ != 0) {
            out.status = DriftStatus::Warning;
            out.triggered[RateKind::tpr] = true;
        }
        return out;
    }

    void reset() override {
        r_ = 0.5;
        k_ = 0;
        d_min_ = std::numeric_limits<double>::infinity();
        s_min_ = std::numeric_limits<double>::infinity();
        warn_time_ = 0;
    }

    std::string_view name() const noexcept override { return "ddm-oci"; }
    std::uint64_t time() const noexcept override { return t_; }
    double recall() const noexcept { return r_; }
    std::uint64_t minority_count() const noexcept { return k_; }

private:
    DdmOciParams params_;
    double r_ = 0.5;
    std::uint64_t k_ = 0;
    double d_min_ = std::numeric_limits<double>::infinity();
    double s_min_ = std::numeric_limits<double>::infinity();
    std::uint64_t t_ = 0;
    std::uint64_t warn_time_ = 0;
};

} // namespace driftwatch
