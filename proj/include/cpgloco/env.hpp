#pragma once

// CPG network driving the gait plant at a fixed tick rate.

#include <cmath>
#include <cstdint>
#include <functional>

#include "cpgloco/cpg_network.hpp"
#include "cpgloco/gait_plant.hpp"
#include "cpgloco/highlevel.hpp"

namespace cpgloco {

struct TickSample {
    double t = 0.0;
    TorsoState torso;
    JointCommands commands{};
    HipModulation psi;
};

using TickObserver = std::function<void(const TickSample&)>;

class WalkingEnv {
public:
    static constexpr double kDefaultDt = 0.01;

    WalkingEnv(CpgNetworkConfig network, PlantConfig plant, double dt = kDefaultDt)
        : network_(std::move(network)), plant_(plant), dt_(dt) {
        if (!(dt_ > 0.0 && dt_ <= kMaxStep)) throw std::invalid_argument("env dt must lie in (0, 0.02]");
    }

    void reset(std::uint64_t plant_seed) {
        network_.reset();
        plant_.reset(plant_seed);
        ticks_ = 0;
    }

    /// Runs ticks for `duration` seconds (rounded to whole ticks) under a
    /// fixed hip modulation, stopping early on a fall. Returns the number
    /// of ticks executed.
    std::size_t advance(const HipModulation& psi, double duration, const TickObserver& observer = {}) {
        const auto n = static_cast<std::size_t>(std::llround(duration / dt_));
        std::size_t done = 0;
        for (; done < n && !plant_.is_fallen(); ++done) {
            const auto cmd = network_.tick(psi, plant_.measured_hip_l(), plant_.measured_hip_r(), dt_);
            const auto& torso = plant_.step(cmd, dt_);
            ++ticks_;
            if (observer) observer({time(), torso, cmd, psi});
        }
        return done;
    }

    [[nodiscard]] double time() const noexcept { return static_cast<double>(ticks_) * dt_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] bool fallen() const noexcept { return plant_.is_fallen(); }
    [[nodiscard]] const TorsoState& observe() const noexcept { return plant_.observe(); }
    [[nodiscard]] EpisodeMetrics metrics() const noexcept { return plant_.metrics(); }
    [[nodiscard]] const CpgNetwork& network() const noexcept { return network_; }
    [[nodiscard]] const GaitPlant& plant() const noexcept { return plant_; }

private:
    CpgNetwork network_;
    GaitPlant plant_;
    double dt_;
    std::size_t ticks_ = 0;
};

using StateVector = std::array<double, TorsoState::size>;

/// Walking environment seen by a high-level controller: actions are phi
/// pairs held for one control period and mapped to hip gains through xi.
class LocomotionEnv {
public:
    LocomotionEnv(CpgNetworkConfig network, PlantConfig plant, double xi, double dt = WalkingEnv::kDefaultDt)
        : env_(std::move(network), plant, dt), xi_(xi) {
        InfluenceConfig{xi}.validate();
    }

    void reset(std::uint64_t plant_seed) { env_.reset(plant_seed); }

    [[nodiscard]] StateVector state() const { return env_.observe().to_array(); }

    /// Holds phi for `period` seconds (or until a fall). Returns the hip
    /// modulation that was applied.
    HipModulation act(const Phi& phi, double period, const TickObserver& observer = {}) {
        const HipModulation psi = phi_to_psi(phi, xi_);
        env_.advance(psi, period, observer);
        return psi;
    }

    [[nodiscard]] bool fallen() const noexcept { return env_.fallen(); }
    [[nodiscard]] double time() const noexcept { return env_.time(); }
    [[nodiscard]] double xi() const noexcept { return xi_; }
    [[nodiscard]] EpisodeMetrics metrics() const noexcept { return env_.metrics(); }
    [[nodiscard]] const WalkingEnv& walking() const noexcept { return env_; }

private:
    WalkingEnv env_;
    double xi_;
};

}  // namespace cpgloco
