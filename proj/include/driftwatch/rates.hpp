#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

// Shared bookkeeping for binary-classification performance rates.
//
// A stream delivers pairs (y, yhat) of true and predicted labels. Four
// rates are monitored: tpr (recall on positives), tnr (recall on
// negatives), ppv (precision of positive predictions) and npv (precision
// of negative predictions). Each observation influences exactly two of
// them: the recall rate of the true class and the precision rate of the
// predicted class.

namespace driftwatch {

enum class RateKind : std::uint8_t { tpr = 0, tnr = 1, ppv = 2, npv = 3 };

inline constexpr std::array<RateKind, 4> all_rates = {
    RateKind::tpr, RateKind::tnr, RateKind::ppv, RateKind::npv};

inline constexpr std::string_view rate_name(RateKind k) noexcept {
    switch (k) {
        case RateKind::tpr: return "tpr";
        case RateKind::tnr: return "tnr";
        case RateKind::ppv: return "ppv";
        default: return "npv";
    }
}

/// Fixed-size map keyed by RateKind, in the order tpr, tnr, ppv, npv.
template <typename T>
struct PerRate {
    std::array<T, 4> values{};

    T& operator[](RateKind k) noexcept { return values[static_cast<std::size_t>(k)]; }
    const T& operator[](RateKind k) const noexcept {
        return values[static_cast<std::size_t>(k)];
    }

    /// Same value for every rate.
    static PerRate filled(const T& v) {
        PerRate r;
        r.values.fill(v);
        return r;
    }
};

namespace detail {
inline void check_label(int v, const char* what) {
    if (v != 0 && v != 1) throw std::invalid_argument(std::string("label out of range: ") + what);
}
} // namespace detail

/// Confusion counts indexed as c[predicted][actual]:
/// c[0][0] = TN, c[0][1] = FN, c[1][0] = FP, c[1][1] = TP.
///
/// Every cell starts at 1 so all four rates are defined from the first
/// step and no empirical rate can ever reach exactly 0 or 1.
struct ConfusionCounts {
    std::uint64_t c[2][2] = {{1, 1}, {1, 1}};

    void reset() noexcept { c[0][0] = c[0][1] = c[1][0] = c[1][1] = 1; }

    void add(int predicted, int actual) {
        detail::check_label(predicted, "predicted");
        detail::check_label(actual, "actual");
        ++c[predicted][actual];
    }

    /// Sample size backing a rate estimate: the column total for recall
    /// rates, the row total for precision rates.
    std::uint64_t denominator(RateKind k) const noexcept {
        switch (k) {
            case RateKind::tpr: return c[0][1] + c[1][1];
            case RateKind::tnr: return c[0][0] + c[1][0];
            case RateKind::ppv: return c[1][0] + c[1][1];
            default: return c[0][0] + c[0][1];
        }
    }

    /// Empirical rate estimate; always strictly inside (0, 1).
    double rate(RateKind k) const noexcept {
        const std::uint64_t num = numerator(k);
        return static_cast<double>(num) / static_cast<double>(denominator(k));
    }

    std::uint64_t numerator(RateKind k) const noexcept {
        switch (k) {
            case RateKind::tpr: return c[1][1];
            case RateKind::tnr: return c[0][0];
            case RateKind::ppv: return c[1][1];
            default: return c[0][0];
        }
    }
};

/// The two rates whose estimate changes on observing (y, yhat): the true
/// class picks the recall rate, the predicted class the precision rate.
inline std::array<RateKind, 2> influenced_rates(int y, int yhat) {
    detail::check_label(y, "y");
    detail::check_label(yhat, "yhat");
    return {y == 1 ? RateKind::tpr : RateKind::tnr,
            yhat == 1 ? RateKind::ppv : RateKind::npv};
}

/// One step of the exponentially decayed running rate:
///   r <- eta * r + (1 - eta) * indicator.
inline double decayed_update(double r, double eta, bool indicator) noexcept {
    return eta * r + (indicator ? (1.0 - eta) : 0.0);
}

} // namespace driftwatch
