#pragma once

// Generalized Matsuoka oscillator: an extensor/flexor neuron pair with
// self-inhibition (adaptation) and mutual inhibition, integrated with a
// fixed-step classical RK4 scheme.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cpgloco {

/// Raised when an oscillator state becomes non-finite or leaves the
/// divergence bound.
class NumericalDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kDivergenceBound = 1e6;
inline constexpr double kMaxStep = 0.02;

struct OscillatorParams {
    double tau0 = 0.28;          // discharge time constant (s)
    double tau0_prime = 0.4977;  // adaptation time constant (s)
    double beta = 2.5;           // self-inhibition
    double w0 = 2.2829;          // mutual inhibition
    double ut = 0.4111;          // tonic input
    double kappa = 1.0;          // frequency modulation factor

    [[nodiscard]] bool valid() const noexcept {
        return tau0 > 0.0 && tau0_prime > 0.0 && kappa > 0.0 && beta >= 0.0 && w0 >= 0.0 &&
               ut >= 0.0 && std::isfinite(tau0) && std::isfinite(tau0_prime) &&
               std::isfinite(kappa) && std::isfinite(beta) && std::isfinite(w0) &&
               std::isfinite(ut);
    }

    void validate() const {
        if (!valid()) throw std::invalid_argument("invalid oscillator parameters");
    }
};

/// Discharge-rate (u) and self-inhibition (v) states of both neurons.
/// The default breaks the symmetric equilibrium.
struct OscillatorState {
    double ue = 0.1;
    double uf = -0.1;
    double ve = 0.0;
    double vf = 0.0;

    [[nodiscard]] bool finite() const noexcept {
        return std::isfinite(ue) && std::isfinite(uf) && std::isfinite(ve) && std::isfinite(vf);
    }

    [[nodiscard]] double max_abs() const noexcept {
        return std::max({std::abs(ue), std::abs(uf), std::abs(ve), std::abs(vf)});
    }

    friend bool operator==(const OscillatorState&, const OscillatorState&) = default;
};

/// Feedback (f) and coupling (s) inputs for each neuron.
struct OscillatorInputs {
    double fe = 0.0;
    double ff = 0.0;
    double se = 0.0;
    double sf = 0.0;
};

[[nodiscard]] inline double rectify(double u) noexcept { return std::max(0.0, u); }

/// Time derivatives of the four state variables. The returned struct holds
/// rates, not states.
[[nodiscard]] inline OscillatorState derivatives(const OscillatorState& s,
                                                 const OscillatorParams& p,
                                                 const OscillatorInputs& in) {
    if (!s.finite()) throw NumericalDivergence("oscillator state is not finite");
    const double ye = rectify(s.ue);
    const double yf = rectify(s.uf);
    const double fast = p.tau0 * p.kappa;
    const double slow = p.tau0_prime * p.kappa;
    OscillatorState rate;
    rate.ue = (-s.ue - p.w0 * yf - p.beta * s.ve + p.ut + in.fe + in.se) / fast;
    rate.ve = (-s.ve + ye) / slow;
    rate.uf = (-s.uf - p.w0 * ye - p.beta * s.vf + p.ut + in.ff + in.sf) / fast;
    rate.vf = (-s.vf + yf) / slow;
    return rate;
}

/// Joint drive signal o = -y_e + y_f.
[[nodiscard]] inline double output(const OscillatorState& s) noexcept {
    return -rectify(s.ue) + rectify(s.uf);
}

namespace detail {
inline OscillatorState axpy(const OscillatorState& x, double h, const OscillatorState& k) noexcept {
    return {x.ue + h * k.ue, x.uf + h * k.uf, x.ve + h * k.ve, x.vf + h * k.vf};
}
}  // namespace detail

/// One classical RK4 step with inputs held constant over the step.
[[nodiscard]] inline OscillatorState step(const OscillatorState& s, const OscillatorParams& p,
                                          const OscillatorInputs& in, double dt) {
    if (!(dt > 0.0) || dt > kMaxStep)
        throw std::invalid_argument("step size must lie in (0, " + std::to_string(kMaxStep) + "]");
    const OscillatorState k1 = derivatives(s, p, in);
    const OscillatorState k2 = derivatives(detail::axpy(s, dt / 2, k1), p, in);
    const OscillatorState k3 = derivatives(detail::axpy(s, dt / 2, k2), p, in);
    const OscillatorState k4 = derivatives(detail::axpy(s, dt, k3), p, in);
    OscillatorState next;
    next.ue = s.ue + dt / 6 * (k1.ue + 2 * k2.ue + 2 * k3.ue + k4.ue);
    next.uf = s.uf + dt / 6 * (k1.uf + 2 * k2.uf + 2 * k3.uf + k4.uf);
    next.ve = s.ve + dt / 6 * (k1.ve + 2 * k2.ve + 2 * k3.ve + k4.ve);
    next.vf = s.vf + dt / 6 * (k1.vf + 2 * k2.vf + 2 * k3.vf + k4.vf);
    if (!next.finite() || next.max_abs() > kDivergenceBound)
        throw NumericalDivergence("oscillator diverged");
    return next;
}

}  // namespace cpgloco
