#pragma once

// Phase-lag measurement between two sampled periodic signals.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace cpgloco {

class NotOscillating : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<double> centered_tail(std::span<const double> x, std::size_t skip) {
    std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(skip), x.end());
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    for (double& v : out) v -= mean;
    return out;
}

/// Mean spacing (in samples) of upward zero crossings, linearly interpolated.
inline double mean_period_samples(const std::vector<double>& x) {
    std::vector<double> crossings;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i - 1] < 0.0 && x[i] >= 0.0)
            crossings.push_back(static_cast<double>(i - 1) + x[i - 1] / (x[i - 1] - x[i]));
    if (crossings.size() < 2) return 0.0;
    return (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

}  // namespace detail

/// Phase of signal_b relative to signal_a in [-pi, pi], from the peak of
/// their cross-correlation over one period of lags. Positive values mean b
/// lags a.
[[nodiscard]] inline double phase_difference(std::span<const double> signal_a,
                                             std::span<const double> signal_b, double dt,
                                             double transient_cut) {
    if (signal_a.size() != signal_b.size()) throw std::invalid_argument("series lengths differ");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const auto skip = static_cast<std::size_t>(std::ceil(transient_cut / dt));
    if (skip + 4 >= signal_a.size()) throw std::invalid_argument("series shorter than transient");

    const auto a = detail::centered_tail(signal_a, skip);
    const auto b = detail::centered_tail(signal_b, skip);
    auto amplitude = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return (*hi - *lo) / 2.0;
    };
    if (amplitude(a) < 1e-6 || amplitude(b) < 1e-6) throw NotOscillating("signal amplitude below 1e-6");

    const double period = detail::mean_period_samples(a);
    if (period < 2.0) throw NotOscillating("no periodic zero crossings found");
    const auto half = static_cast<long>(std::ceil(period / 2.0));
    const auto n = static_cast<long>(a.size());
    if (2 * half + 4 >= n) throw NotOscillating("series shorter than two periods");

    // corr(lag) = mean_t a[t] * b[t + lag]
    auto corr = [&](long lag) {
        double acc = 0.0;
        long count = 0;
        for (long t = std::max(0L, -lag); t < n && t + lag < n; ++t, ++count) acc += a[t] * b[t + lag];
        return count ? acc / static_cast<double>(count) : 0.0;
    };
    long best = -half;
    double best_val = corr(best);
    for (long lag = -half + 1; lag <= half; ++lag)
        if (const double c = corr(lag); c > best_val) {
            best_val = c;
            best = lag;
        }
    const double cm = corr(best - 1);
    const double cp = corr(best + 1);
    double refined = static_cast<double>(best);
    if (const double denom = cm - 2.0 * best_val + cp; denom < 0.0)
        refined += 0.5 * (cm - cp) / denom;

    double phase = 2.0 * std::numbers::pi * refined / period;
    phase = std::remainder(phase, 2.0 * std::numbers::pi);
    return phase;
}

/// Absolute phase distance from a target, accounting for wrap-around.
[[nodiscard]] inline double phase_distance(double phase, double target) {
    return std::abs(std::remainder(phase - target, 2.0 * std::numbers::pi));
}

}  // namespace cpgloco
