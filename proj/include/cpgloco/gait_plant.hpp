#pragma once

// Surrogate walking plant. Stride amplitude of each sagittal hip, scaled by
// a per-leg efficiency, sets forward speed and yaw rate of a unicycle model
// of the torso. Posture and sway follow the commanded joint angles.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "cpgloco/cpg_network.hpp"
#include "cpgloco/kv_config.hpp"

namespace cpgloco {

/// [alpha, beta, gamma, alpha_dot, beta_dot, gamma_dot, x, y, z, x_dot, y_dot, z_dot]
struct TorsoState {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double alpha_dot = 0.0, beta_dot = 0.0, gamma_dot = 0.0;
    double x = 0.0, y = 0.0, z = 0.0;
    double x_dot = 0.0, y_dot = 0.0, z_dot = 0.0;

    static constexpr std::size_t size = 12;

    [[nodiscard]] std::array<double, size> to_array() const {
        return {alpha, beta, gamma, alpha_dot, beta_dot, gamma_dot, x, y, z, x_dot, y_dot, z_dot};
    }

    friend bool operator==(const TorsoState&, const TorsoState&) = default;
};

struct EpisodeMetrics {
    double d_x = 0.0;
    double d_y = 0.0;
    double gamma_final = 0.0;
    double t_up = 0.0;
    bool fell = false;
};

struct PlantConfig {
    double eta_l = 1.0;              // stride efficiency, left leg
    double eta_r = 0.97;             // stride efficiency, right leg
    double c_v = 0.4;                // forward speed per rad of hip amplitude (m/s/rad)
    double c_turn = 1.0;             // yaw rate per rad of stride imbalance (rad/s/rad)
    double slip_noise_sigma = 0.02;  // yaw-rate noise (rad/s), drawn every step
    double z0 = 0.55;                // nominal torso height (m)

    // Stability envelope.
    double max_hip_amplitude = 0.45;  // rad
    double max_hip_center = 0.3;     // |mean sagittal hip angle| (rad)
    double max_tilt = 0.6;           // |alpha|, |beta| (rad)
    double lean_reference = -0.019;   // balanced sagittal posture (rad)
    double lean_tolerance = 0.001;   // rad
    double tip_rate = 10.0;          // tilt drift per rad of excess lean or sway (1/s)
    double sway_tolerance = 0.34;    // lateral sway amplitude tolerated without drift (rad)

    // Sway and bob coefficients.
    double c_roll = 1.0;
    double c_pitch = 0.05;
    double c_bob = 0.1;

    std::uint64_t seed = 1;

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("plant: " + m); };
        if (!(eta_l > 0.0 && eta_l <= 1.0) || !(eta_r > 0.0 && eta_r <= 1.0))
            fail("eta_l and eta_r must lie in (0, 1]");
        if (!(c_v > 0.0) || !(c_turn > 0.0)) fail("c_v and c_turn must be positive");
        if (!(slip_noise_sigma >= 0.0)) fail("slip_noise_sigma must be non-negative");
        if (!(z0 > 0.0)) fail("z0 must be positive");
        if (!(max_hip_amplitude > 0.0) || !(max_hip_center > 0.0) || !(max_tilt > 0.0))
            fail("stability limits must be positive");
        if (!(lean_tolerance >= 0.0) || !(sway_tolerance >= 0.0) || !(tip_rate >= 0.0))
            fail("tolerances and tip rate must be >= 0");
    }
};

/// Half peak-to-peak amplitude and center of the last full cycle of a
/// periodic signal. The signal is split into half-cycles by a Schmitt
/// trigger around the previous center; the estimate is refreshed at every
/// half-cycle boundary from the two most recent halves.
class CycleTracker {
public:
    void push(double v, double t) {
        if (!started_) {
            started_ = true;
            current_ = {v, v};
            reference_ = v;
            last_switch_ = t;
            return;
        }
        current_.lo = std::min(current_.lo, v);
        current_.hi = std::max(current_.hi, v);
        const Range window = merged();
        if (!has_cycle_) reference_ = (window.hi + window.lo) / 2.0;
        const double band = kHysteresis * (has_cycle_ ? amplitude_ : (window.hi - window.lo) / 2.0);

        const bool flip = high_ ? v < reference_ - band : v > reference_ + band;
        if (flip && window.hi - window.lo > 1e-12) {
            high_ = !high_;
            if (halves_ >= 2) {
                amplitude_ = (window.hi - window.lo) / 2.0;
                center_ = (window.hi + window.lo) / 2.0;
                reference_ = center_;
                has_cycle_ = true;
            }
            ++halves_;
            previous_ = current_;
            current_ = {v, v};
            last_switch_ = t;
        } else if (t - last_switch_ > kMaxHalfCycle) {
            // No half-cycle boundary for too long: the signal is static or its
            // center moved away from the reference.
            amplitude_ = (current_.hi - current_.lo) / 2.0;
            center_ = (current_.hi + current_.lo) / 2.0;
            reference_ = center_;
            has_cycle_ = true;
            halves_ = 0;
            previous_ = current_ = {v, v};
            last_switch_ = t;
        }
    }

    [[nodiscard]] double amplitude() const noexcept { return amplitude_; }
    [[nodiscard]] double center() const noexcept { return center_; }
    /// Half-range over the half-cycle in progress and the one before it.
    [[nodiscard]] double running_amplitude() const noexcept {
        if (!started_) return 0.0;
        const Range w = merged();
        return (w.hi - w.lo) / 2.0;
    }
    [[nodiscard]] bool started() const noexcept { return started_; }
    [[nodiscard]] bool has_cycle() const noexcept { return has_cycle_; }

private:
    struct Range {
        double lo = 0.0, hi = 0.0;
    };

    [[nodiscard]] Range merged() const noexcept {
        if (halves_ == 0) return current_;
        return {std::min(previous_.lo, current_.lo), std::max(previous_.hi, current_.hi)};
    }

    static constexpr double kHysteresis = 0.25;
    static constexpr double kMaxHalfCycle = 5.0;

    bool started_ = false;
    bool has_cycle_ = false;
    bool high_ = false;
    std::size_t halves_ = 0;
    Range current_, previous_;
    double reference_ = 0.0;
    double last_switch_ = 0.0;
    double amplitude_ = 0.0;
    double center_ = 0.0;
};

[[nodiscard]] inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

class GaitPlant {
public:
    explicit GaitPlant(PlantConfig config) : config_(config) {
        config_.validate();
        reset(config_.seed);
    }

    void reset(std::uint64_t seed) {
        rng_.seed(seed);
        torso_ = TorsoState{};
        torso_.z = config_.z0;
        time_ = 0.0;
        t_up_ = 0.0;
        fell_ = false;
        hip_l_ = CycleTracker{};
        hip_r_ = CycleTracker{};
        lean_ = 0.0;
        lean_primed_ = false;
        tilt_ = 0.0;
        roll_ = 0.0;
        sway_ = CycleTracker{};
        measured_hip_l_ = measured_hip_r_ = 0.0;
    }

    /// Advances the plant by dt under the given joint targets. After a fall
    /// the torso is frozen and only time advances.
    const TorsoState& step(const JointCommands& cmd, double dt) {
        if (!(dt > 0.0)) throw std::invalid_argument("plant step requires dt > 0");
        auto angle = [&](Joint j) { return cmd[index(j)].theta; };
        time_ += dt;

        // Ideal tracking: the measured angle is the commanded angle.
        measured_hip_l_ = angle(Joint::hip_sag_l);
        measured_hip_r_ = angle(Joint::hip_sag_r);
        if (fell_) return torso_;

        hip_l_.push(measured_hip_l_, time_);
        hip_r_.push(measured_hip_r_, time_);
        // Walking needs both legs: no stride until each hip completed a cycle.
        const bool stepping = hip_l_.has_cycle() && hip_r_.has_cycle();
        const double stride_l = stepping ? hip_l_.amplitude() * config_.eta_l : 0.0;
        const double stride_r = stepping ? hip_r_.amplitude() * config_.eta_r : 0.0;

        const double speed = config_.c_v * (stride_l + stride_r) / 2.0;
        double yaw_rate = config_.c_turn * (stride_l - stride_r);
        if (config_.slip_noise_sigma > 0.0) yaw_rate += noise_(rng_) * config_.slip_noise_sigma;

        const TorsoState prev = torso_;
        const double gamma_mid = prev.gamma + 0.5 * yaw_rate * dt;
        torso_.gamma = wrap_angle(prev.gamma + yaw_rate * dt);
        torso_.gamma_dot = yaw_rate;
        torso_.x_dot = speed * std::cos(gamma_mid);
        torso_.y_dot = speed * std::sin(gamma_mid);
        torso_.x = prev.x + torso_.x_dot * dt;
        torso_.y = prev.y + torso_.y_dot * dt;

        // Sagittal posture: a low-passed weighted sum of joint angles. Leaving
        // the balanced band makes the torso pitch drift until it falls.
        const double lean_now = (angle(Joint::ankle_sag_l) + angle(Joint::ankle_sag_r)) / 2 +
                                 0.25 * (angle(Joint::knee_l) + angle(Joint::knee_r)) +
                                 0.05 * (angle(Joint::shoulder_l) + angle(Joint::shoulder_r));
        if (!lean_primed_) {
            lean_ = lean_now;
            lean_primed_ = true;
        }
        lean_ += (lean_now - lean_) * std::min(1.0, dt / kPostureTimeConstant);
        const double error = lean_ - config_.lean_reference;
        const double excess = std::max(0.0, std::abs(error) - config_.lean_tolerance);
        // Only a moving robot tips over; standing still is stable.
        const double motion = std::max(hip_l_.running_amplitude(), hip_r_.running_amplitude());
        const double activity = std::min(1.0, motion / kWalkingAmplitude);
        tilt_ += std::copysign(excess, error) * config_.tip_rate * activity * dt;

        const double frontal_hip = (angle(Joint::hip_front_l) - angle(Joint::hip_front_r)) / 2.0;
        const double frontal_ankle = (angle(Joint::ankle_front_l) - angle(Joint::ankle_front_r)) / 2.0;
        const double hip_split = (angle(Joint::hip_sag_l) - angle(Joint::hip_sag_r)) / 2.0;
        const double arm_split = (angle(Joint::shoulder_l) - angle(Joint::shoulder_r)) / 2.0;
        // Lateral sway beyond tolerance makes the torso roll over.
        const double sway = config_.c_roll * (frontal_hip - frontal_ankle);
        sway_.push(sway, time_);
        const double sway_amp = std::max(sway_.amplitude(), sway_.running_amplitude());
        roll_ += std::max(0.0, sway_amp - config_.sway_tolerance) * config_.tip_rate * dt;
        torso_.alpha = roll_ + sway;
        torso_.beta = tilt_ + config_.c_pitch * arm_split;
        torso_.z = config_.z0 - config_.c_bob * (1.0 - std::cos(hip_split));
        torso_.alpha_dot = (torso_.alpha - prev.alpha) / dt;
        torso_.beta_dot = (torso_.beta - prev.beta) / dt;
        torso_.z_dot = (torso_.z - prev.z) / dt;

        if (violates_envelope()) {
            fell_ = true;
        } else {
            t_up_ = time_;
        }
        return torso_;
    }

    [[nodiscard]] bool is_fallen() const noexcept { return fell_; }

    [[nodiscard]] const TorsoState& observe() const noexcept { return torso_; }

    [[nodiscard]] EpisodeMetrics metrics() const noexcept {
        return {torso_.x, torso_.y, torso_.gamma, t_up_, fell_};
    }

    [[nodiscard]] double time() const noexcept { return time_; }
    [[nodiscard]] double measured_hip_l() const noexcept { return measured_hip_l_; }
    [[nodiscard]] double measured_hip_r() const noexcept { return measured_hip_r_; }
    [[nodiscard]] double hip_amplitude_l() const noexcept { return hip_l_.amplitude(); }
    [[nodiscard]] double hip_amplitude_r() const noexcept { return hip_r_.amplitude(); }
    [[nodiscard]] const PlantConfig& config() const noexcept { return config_; }

private:
    static constexpr double kPostureTimeConstant = 1.0;
    static constexpr double kWalkingAmplitude = 0.01;  // rad

    [[nodiscard]] bool violates_envelope() const {
        const double amp = std::max({hip_l_.amplitude(), hip_r_.amplitude(), hip_l_.running_amplitude(),
                                     hip_r_.running_amplitude()});
        if (amp > config_.max_hip_amplitude) return true;
        if (std::abs(hip_l_.center()) > config_.max_hip_center ||
            std::abs(hip_r_.center()) > config_.max_hip_center)
            return true;
        return std::abs(torso_.alpha) > config_.max_tilt || std::abs(torso_.beta) > config_.max_tilt;
    }

    PlantConfig config_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> noise_{0.0, 1.0};
    TorsoState torso_{};
    double time_ = 0.0;
    double t_up_ = 0.0;
    bool fell_ = false;
    CycleTracker hip_l_, hip_r_;
    double lean_ = 0.0;
    bool lean_primed_ = false;
    double tilt_ = 0.0;
    CycleTracker sway_;
    double roll_ = 0.0;
    double measured_hip_l_ = 0.0, measured_hip_r_ = 0.0;
};

// Plant keys live under "plant." in the experiment config file.
[[nodiscard]] inline PlantConfig plant_config_from(const KeyValueFile& kv) {
    PlantConfig c;
    c.eta_l = kv.get_double("plant.eta_l", c.eta_l);
    c.eta_r = kv.get_double("plant.eta_r", c.eta_r);
    c.c_v = kv.get_double("plant.c_v", c.c_v);
    c.c_turn = kv.get_double("plant.c_turn", c.c_turn);
    c.slip_noise_sigma = kv.get_double("plant.slip_noise_sigma", c.slip_noise_sigma);
    c.z0 = kv.get_double("plant.z0", c.z0);
    c.max_hip_amplitude = kv.get_double("plant.max_hip_amplitude", c.max_hip_amplitude);
    c.max_hip_center = kv.get_double("plant.max_hip_center", c.max_hip_center);
    c.max_tilt = kv.get_double("plant.max_tilt", c.max_tilt);
    c.lean_reference = kv.get_double("plant.lean_reference", c.lean_reference);
    c.lean_tolerance = kv.get_double("plant.lean_tolerance", c.lean_tolerance);
    c.tip_rate = kv.get_double("plant.tip_rate", c.tip_rate);
    c.sway_tolerance = kv.get_double("plant.sway_tolerance", c.sway_tolerance);
    c.c_roll = kv.get_double("plant.c_roll", c.c_roll);
    c.c_pitch = kv.get_double("plant.c_pitch", c.c_pitch);
    c.c_bob = kv.get_double("plant.c_bob", c.c_bob);
    c.seed = static_cast<std::uint64_t>(kv.get_int("plant.seed", static_cast<long long>(c.seed)));
    c.validate();
    return c;
}

inline void write_plant_config(KeyValueFile& kv, const PlantConfig& c) {
    kv.set("plant.eta_l", format_double(c.eta_l));
    kv.set("plant.eta_r", format_double(c.eta_r));
    kv.set("plant.c_v", format_double(c.c_v));
    kv.set("plant.c_turn", format_double(c.c_turn));
    kv.set("plant.slip_noise_sigma", format_double(c.slip_noise_sigma));
    kv.set("plant.z0", format_double(c.z0));
    kv.set("plant.max_hip_amplitude", format_double(c.max_hip_amplitude));
    kv.set("plant.max_hip_center", format_double(c.max_hip_center));
    kv.set("plant.max_tilt", format_double(c.max_tilt));
    kv.set("plant.lean_reference", format_double(c.lean_reference));
    kv.set("plant.lean_tolerance", format_double(c.lean_tolerance));
    kv.set("plant.tip_rate", format_double(c.tip_rate));
    kv.set("plant.sway_tolerance", format_double(c.sway_tolerance));
    kv.set("plant.c_roll", format_double(c.c_roll));
    kv.set("plant.c_pitch", format_double(c.c_pitch));
    kv.set("plant.c_bob", format_double(c.c_bob));
    kv.set("plant.seed", std::to_string(c.seed));
}

}  // namespace cpgloco
