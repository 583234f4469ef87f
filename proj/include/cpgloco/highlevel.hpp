#pragma once

// Hip-gain modulation from high-level controller outputs, and the linear
// lateral-deviation baseline controller.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "cpgloco/cpg_network.hpp"

namespace cpgloco {

using Phi = std::array<double, 2>;  // (phi_l, phi_r)

struct InfluenceConfig {
    double xi = 1.0;

    void validate() const {
        if (!(xi >= 0.0 && xi <= 1.0)) throw std::invalid_argument("xi must lie in [0, 1]");
    }
};

struct LinearControllerConfig {
    double gain = 0.2;  // per meter of lateral deviation
    double xi = 0.1;

    void validate() const {
        if (!(gain >= 0.0) || !std::isfinite(gain)) throw std::invalid_argument("linear gain must be >= 0");
        InfluenceConfig{xi}.validate();
    }
};

/// psi = 1 - (1 - xi) * phi, per side. Result lies in [xi, 1].
[[nodiscard]] inline HipModulation phi_to_psi(const Phi& phi, double xi) {
    InfluenceConfig{xi}.validate();
    for (double p : phi)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("phi components must lie in [0, 1]");
    return {1.0 - (1.0 - xi) * phi[0], 1.0 - (1.0 - xi) * phi[1]};
}

/// Shortens the stride on the side the robot has drifted to. d_y > 0 (left
/// of the start line) reduces the left hip gain.
[[nodiscard]] inline Phi linear_control(double d_y, const LinearControllerConfig& cfg) {
    if (!std::isfinite(d_y)) throw std::invalid_argument("d_y must be finite");
    const double u = std::clamp(cfg.gain * std::abs(d_y), 0.0, 1.0);
    if (d_y > 0.0) return {u, 0.0};
    if (d_y < 0.0) return {0.0, u};
    return {0.0, 0.0};
}

}  // namespace cpgloco
