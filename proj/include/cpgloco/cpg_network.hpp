#pragma once

// Thirteen coupled Matsuoka oscillators: one pacemaker plus one CPG per
// joint. Produces twelve target joint angles per tick.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpgloco/kv_config.hpp"
#include "cpgloco/log.hpp"
#include "cpgloco/matsuoka.hpp"

namespace cpgloco {

inline constexpr std::size_t kNumCpgs = 13;
inline constexpr std::size_t kNumJoints = 12;
inline constexpr std::size_t kNumGains = 6;
inline constexpr std::size_t kNumBiases = 4;

enum class Joint : std::size_t {
    hip_sag_l,
    hip_sag_r,
    hip_front_l,
    hip_front_r,
    knee_l,
    knee_r,
    ankle_sag_l,
    ankle_sag_r,
    ankle_front_l,
    ankle_front_r,
    shoulder_l,
    shoulder_r,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "hip_sag_l",   "hip_sag_r",   "hip_front_l",   "hip_front_r",   "knee_l",     "knee_r",
    "ankle_sag_l", "ankle_sag_r", "ankle_front_l", "ankle_front_r", "shoulder_l", "shoulder_r",
};

[[nodiscard]] constexpr std::size_t index(Joint j) noexcept { return static_cast<std::size_t>(j); }

[[nodiscard]] inline Joint joint_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumJoints; ++i)
        if (kJointNames[i] == name) return static_cast<Joint>(i);
    throw ConfigError("unknown joint '" + std::string(name) + "'");
}

[[nodiscard]] constexpr bool is_frontal(Joint j) noexcept {
    return j == Joint::hip_front_l || j == Joint::hip_front_r || j == Joint::ankle_front_l ||
           j == Joint::ankle_front_r;
}

[[nodiscard]] constexpr bool is_left(Joint j) noexcept { return index(j) % 2 == 0; }

/// The same kind of joint on the other side.
[[nodiscard]] constexpr Joint mirror(Joint j) noexcept {
    return static_cast<Joint>(index(j) % 2 == 0 ? index(j) + 1 : index(j) - 1);
}

struct JointCommand {
    Joint joint = Joint::hip_sag_l;
    double theta = 0.0;  // rad
};

using JointCommands = std::array<JointCommand, kNumJoints>;

/// Multipliers on the two sagittal-hip CPG outputs.
struct HipModulation {
    double psi_l = 1.0;
    double psi_r = 1.0;

    [[nodiscard]] bool valid() const noexcept {
        return psi_l >= 0.0 && psi_l <= 1.0 && psi_r >= 0.0 && psi_r <= 1.0;
    }
};

/// Which CPG drives a joint and which shared gain/bias scale its output.
struct JointDrive {
    std::size_t cpg = 0;
    std::size_t gain_id = 0;                // 0-based index into gains
    std::optional<std::size_t> bias_id;     // 0-based index into biases
};

using CouplingMatrix = std::array<std::array<double, kNumCpgs>, kNumCpgs>;

struct CpgNetworkConfig {
    /// coupling[i][j]: weight with which CPG i receives CPG j's state.
    CouplingMatrix coupling{};
    std::size_t pacemaker = 0;
    std::array<JointDrive, kNumJoints> drives{};
    std::array<double, kNumGains> gains{};
    std::array<double, kNumBiases> biases{};
    double feedback_weight = 0.0;
    OscillatorParams oscillator{};
    OscillatorState initial_state{};
    /// CPGs that start from the extensor/flexor-swapped initial state.
    std::array<bool, kNumCpgs> mirrored_initial{};

    [[nodiscard]] OscillatorState initial_state_of(std::size_t cpg) const {
        if (!mirrored_initial[cpg]) return initial_state;
        return {initial_state.uf, initial_state.ue, initial_state.vf, initial_state.ve};
    }

    /// Phase relation between two CPGs implied by the topology: the direct
    /// weight if they are coupled, otherwise the sign product of their
    /// couplings from a shared source. 0 when unrelated.
    [[nodiscard]] double relation(std::size_t a, std::size_t b) const {
        if (coupling[a][b] != 0.0) return coupling[a][b];
        if (coupling[b][a] != 0.0) return coupling[b][a];
        for (std::size_t s = 0; s < kNumCpgs; ++s)
            if (coupling[a][s] != 0.0 && coupling[b][s] != 0.0) return coupling[a][s] * coupling[b][s];
        return 0.0;
    }

    [[nodiscard]] double relation(Joint a, Joint b) const {
        return relation(drives[index(a)].cpg, drives[index(b)].cpg);
    }

    /// Throws ConfigError describing the first violated invariant.
    void validate() const {
        oscillator.validate();
        if (pacemaker >= kNumCpgs) throw ConfigError("pacemaker index out of range");
        for (std::size_t i = 0; i < kNumCpgs; ++i) {
            if (coupling[i][i] != 0.0)
                throw ConfigError("coupling diagonal must be zero (cpg " + std::to_string(i) + ")");
            for (std::size_t j = 0; j < kNumCpgs; ++j) {
                const double w = coupling[i][j];
                if (w != 0.0 && w != 1.0 && w != -1.0)
                    throw ConfigError("coupling weights must be -1, 0 or +1");
            }
        }
        // Reachability from the pacemaker along j -> i for every nonzero w_ij.
        std::array<bool, kNumCpgs> seen{};
        std::queue<std::size_t> frontier;
        frontier.push(pacemaker);
        seen[pacemaker] = true;
        while (!frontier.empty()) {
            const std::size_t j = frontier.front();
            frontier.pop();
            for (std::size_t i = 0; i < kNumCpgs; ++i)
                if (!seen[i] && coupling[i][j] != 0.0) {
                    seen[i] = true;
                    frontier.push(i);
                }
        }
        for (std::size_t i = 0; i < kNumCpgs; ++i)
            if (!seen[i])
                throw ConfigError("cpg " + std::to_string(i) + " is not reachable from the pacemaker");

        std::array<bool, kNumCpgs> used{};
        for (std::size_t jn = 0; jn < kNumJoints; ++jn) {
            const auto joint = static_cast<Joint>(jn);
            const auto& d = drives[jn];
            const std::string name(kJointNames[jn]);
            if (d.cpg >= kNumCpgs || d.cpg == pacemaker)
                throw ConfigError("joint " + name + " must be driven by a non-pacemaker cpg");
            if (used[d.cpg]) throw ConfigError("cpg " + std::to_string(d.cpg) + " drives two joints");
            used[d.cpg] = true;
            if (d.gain_id >= kNumGains) throw ConfigError("joint " + name + ": gain id out of range");
            if (d.bias_id && *d.bias_id >= kNumBiases)
                throw ConfigError("joint " + name + ": bias id out of range");
            if (is_frontal(joint) && d.bias_id)
                throw ConfigError("frontal joint " + name + " must not carry a bias");
            const auto& m = drives[index(mirror(joint))];
            if (m.gain_id != d.gain_id || m.bias_id != d.bias_id)
                throw ConfigError("joint " + name + " does not share gain/bias with its mirror");
        }
        if (drives[index(Joint::hip_sag_l)].gain_id != 0 ||
            drives[index(Joint::hip_sag_l)].bias_id != std::optional<std::size_t>(0))
            throw ConfigError("sagittal hips must use gain g1 and bias b1");
        if (!initial_state.finite()) throw ConfigError("initial oscillator state must be finite");
        if (!std::isfinite(feedback_weight)) throw ConfigError("feedback weight must be finite");
    }

    [[nodiscard]] double joint_gain(Joint j) const { return gains[drives[index(j)].gain_id]; }
    [[nodiscard]] double joint_bias(Joint j) const {
        const auto& b = drives[index(j)].bias_id;
        return b ? biases[*b] : 0.0;
    }
};

/// Joint target from a CPG output: o * psi * g + b. psi is 1 for every joint
/// but the sagittal hips, b is 0 for frontal joints.
[[nodiscard]] constexpr double joint_target(double o, double psi, double gain, double bias) noexcept {
    return o * psi * gain + bias;
}

/// Gains, biases, kappa and k of the best gait reported for the original
/// robot.
struct GaitParameters {
    double kappa = 0.3178;
    std::array<double, kNumGains> gains = {0.3777, 0.0234, 0.0132, 0.4567, 0.2019, 0.3309};
    std::array<double, kNumBiases> biases = {-0.0519, 0.0963, -0.1156, 0.4814};
    double feedback_weight = 1.5364;
};

inline void apply(CpgNetworkConfig& cfg, const GaitParameters& g) {
    cfg.oscillator.kappa = g.kappa;
    cfg.gains = g.gains;
    cfg.biases = g.biases;
    cfg.feedback_weight = g.feedback_weight;
}

/// Default 13-CPG layout. CPG 0 is the pacemaker and joint j is driven by
/// CPG j + 1, so the sagittal hips are CPGs 1 (left) and 2 (right).
///
/// The pacemaker forms a mutually inhibitory half-center with the CPG of the
/// right frontal ankle (its "partner"). Every other CPG receives the
/// difference of the two: +pacemaker -partner for the in-phase group
/// (left leg, right shoulder), -pacemaker +partner for the anti-phase group
/// (right leg, left shoulder). The drive has no common-mode component, so
/// left and right sides are exact mirror images. Each shoulder additionally
/// follows the contralateral sagittal hip.
///
/// Resulting relations: contralateral sagittal hips anti-phase, sagittal hip
/// in phase with the contralateral shoulder, knee and ankles in phase with
/// the ipsilateral sagittal hip, frontal hips anti-phase contralaterally.
[[nodiscard]] inline CpgNetworkConfig default_topology() {
    CpgNetworkConfig cfg;
    cfg.pacemaker = 0;
    auto cpg = [](Joint j) { return index(j) + 1; };
    const std::size_t partner = cpg(Joint::ankle_front_r);

    cfg.coupling[0][partner] = -1.0;
    cfg.coupling[partner][0] = -1.0;
    cfg.mirrored_initial[partner] = true;
    for (std::size_t jn = 0; jn < kNumJoints; ++jn) {
        const auto joint = static_cast<Joint>(jn);
        const bool shoulder = joint == Joint::shoulder_l || joint == Joint::shoulder_r;
        const double sign = (is_left(joint) != shoulder) ? 1.0 : -1.0;
        const std::size_t c = cpg(joint);
        if (c == partner) continue;
        cfg.coupling[c][0] = sign;
        cfg.coupling[c][partner] = -sign;
        cfg.mirrored_initial[c] = sign < 0.0;
    }
    cfg.coupling[cpg(Joint::shoulder_r)][cpg(Joint::hip_sag_l)] = 1.0;
    cfg.coupling[cpg(Joint::shoulder_l)][cpg(Joint::hip_sag_r)] = 1.0;

    auto drive = [&](Joint j, std::size_t gain, std::optional<std::size_t> bias) {
        cfg.drives[index(j)] = {cpg(j), gain, bias};
        cfg.drives[index(mirror(j))] = {cpg(mirror(j)), gain, bias};
    };
    drive(Joint::hip_sag_l, 0, 0);
    drive(Joint::knee_l, 1, 1);
    drive(Joint::ankle_sag_l, 2, 2);
    drive(Joint::hip_front_l, 3, std::nullopt);
    drive(Joint::ankle_front_l, 4, std::nullopt);
    drive(Joint::shoulder_l, 5, 3);

    apply(cfg, GaitParameters{});
    return cfg;
}

/// Stateful network. Single writer; distinct instances are independent.
class CpgNetwork {
public:
    /// `check = false` skips the topology invariants (ablation experiments).
    explicit CpgNetwork(CpgNetworkConfig config, bool check = true) : config_(std::move(config)) {
        if (check) config_.validate();
        else config_.oscillator.validate();
        reset();
    }

    void reset() {
        for (std::size_t i = 0; i < kNumCpgs; ++i) states_[i] = config_.initial_state_of(i);
        outputs_.fill(0.0);
        clamp_count_ = 0;
    }

    /// Advances every oscillator by dt and maps outputs to joint targets.
    /// measured_hip_* are the hip angles reported for the previous tick.
    JointCommands tick(const HipModulation& hip_mod, double measured_hip_l, double measured_hip_r,
                       double dt) {
        if (!hip_mod.valid()) throw std::invalid_argument("hip modulation outside [0, 1]");
        if (!std::isfinite(measured_hip_l) || !std::isfinite(measured_hip_r))
            throw std::invalid_argument("measured hip angles must be finite");

        std::array<OscillatorInputs, kNumCpgs> inputs{};
        for (std::size_t i = 0; i < kNumCpgs; ++i)
            for (std::size_t j = 0; j < kNumCpgs; ++j) {
                const double w = config_.coupling[i][j];
                if (w == 0.0) continue;
                inputs[i].se += w * states_[j].ue;
                inputs[i].sf += w * states_[j].uf;
            }
        const double k = config_.feedback_weight;
        auto& fl = inputs[config_.drives[index(Joint::hip_sag_l)].cpg];
        fl.fe += k * measured_hip_l;
        fl.ff -= k * measured_hip_l;
        auto& fr = inputs[config_.drives[index(Joint::hip_sag_r)].cpg];
        fr.fe += k * measured_hip_r;
        fr.ff -= k * measured_hip_r;

        for (std::size_t i = 0; i < kNumCpgs; ++i) {
            states_[i] = step(states_[i], config_.oscillator, inputs[i], dt);
            outputs_[i] = output(states_[i]);
        }

        JointCommands out{};
        for (std::size_t jn = 0; jn < kNumJoints; ++jn) {
            const auto joint = static_cast<Joint>(jn);
            const double psi = joint == Joint::hip_sag_l   ? hip_mod.psi_l
                               : joint == Joint::hip_sag_r ? hip_mod.psi_r
                                                           : 1.0;
            double theta =
                joint_target(outputs_[config_.drives[jn].cpg], psi, config_.joint_gain(joint), config_.joint_bias(joint));
            if (std::abs(theta) > std::numbers::pi) {
                ++clamp_count_;
                log::warn("joint ", kJointNames[jn], " target ", theta, " rad clamped to +/-pi");
                theta = std::copysign(std::numbers::pi, theta);
            }
            out[jn] = {joint, theta};
        }
        return out;
    }

    [[nodiscard]] const CpgNetworkConfig& config() const noexcept { return config_; }
    [[nodiscard]] const std::array<OscillatorState, kNumCpgs>& states() const noexcept { return states_; }
    [[nodiscard]] const std::array<double, kNumCpgs>& outputs() const noexcept { return outputs_; }
    [[nodiscard]] std::size_t clamp_count() const noexcept { return clamp_count_; }

    void set_state(std::size_t cpg, const OscillatorState& s) { states_.at(cpg) = s; }

private:
    CpgNetworkConfig config_;
    std::array<OscillatorState, kNumCpgs> states_{};
    std::array<double, kNumCpgs> outputs_{};
    std::size_t clamp_count_ = 0;
};

// ---------------------------------------------------------------------------
// Config file I/O. Schema (all keys under "network."):
//   kappa, tau0, tau0_prime, beta, w0, ut     oscillator constants
//   feedback_weight                           k
//   pacemaker                                 cpg index
//   gains = g1 .. g6 ; biases = b1 .. b4
//   initial_state = ue uf ve vf
//   mirrored_initial = <cpg> ...               start from (uf ue vf ve)
//   coupling = i j w                          repeated; replaces the default
//   joint = <name> <cpg> g<n> b<n>|-          repeated; replaces the default
// Missing keys keep the default_topology() values.
// ---------------------------------------------------------------------------

[[nodiscard]] inline CpgNetworkConfig network_config_from(const KeyValueFile& kv) {
    CpgNetworkConfig cfg = default_topology();
    auto& osc = cfg.oscillator;
    osc.kappa = kv.get_double("network.kappa", osc.kappa);
    osc.tau0 = kv.get_double("network.tau0", osc.tau0);
    osc.tau0_prime = kv.get_double("network.tau0_prime", osc.tau0_prime);
    osc.beta = kv.get_double("network.beta", osc.beta);
    osc.w0 = kv.get_double("network.w0", osc.w0);
    osc.ut = kv.get_double("network.ut", osc.ut);
    cfg.feedback_weight = kv.get_double("network.feedback_weight", cfg.feedback_weight);
    cfg.pacemaker = static_cast<std::size_t>(kv.get_int("network.pacemaker", 0));

    auto fixed = [&](std::string_view key, auto& arr) {
        if (const auto* v = kv.find(key)) {
            const auto vals = KeyValueFile::to_doubles(*v, key);
            if (vals.size() != arr.size())
                throw ConfigError("key '" + std::string(key) + "': expected " +
                                  std::to_string(arr.size()) + " values");
            std::copy(vals.begin(), vals.end(), arr.begin());
        }
    };
    fixed("network.gains", cfg.gains);
    fixed("network.biases", cfg.biases);
    if (const auto* v = kv.find("network.initial_state")) {
        const auto vals = KeyValueFile::to_doubles(*v, "network.initial_state");
        if (vals.size() != 4) throw ConfigError("key 'network.initial_state': expected 4 values");
        cfg.initial_state = {vals[0], vals[1], vals[2], vals[3]};
    }

    if (const auto* v = kv.find("network.mirrored_initial")) {
        cfg.mirrored_initial = {};
        for (const auto& w : KeyValueFile::split_words(*v)) {
            const auto i = KeyValueFile::to_int(w, "network.mirrored_initial");
            if (i < 0 || i >= static_cast<long long>(kNumCpgs))
                throw ConfigError("network.mirrored_initial index out of range");
            cfg.mirrored_initial[i] = true;
        }
    }

    const auto couplings = kv.all("network.coupling");
    if (!couplings.empty()) {
        cfg.coupling = {};
        for (const auto& c : couplings) {
            const auto w = KeyValueFile::split_words(c);
            if (w.size() != 3) throw ConfigError("network.coupling expects 'i j w', got '" + c + "'");
            const auto i = KeyValueFile::to_int(w[0], "network.coupling");
            const auto j = KeyValueFile::to_int(w[1], "network.coupling");
            if (i < 0 || j < 0 || i >= static_cast<long long>(kNumCpgs) ||
                j >= static_cast<long long>(kNumCpgs))
                throw ConfigError("network.coupling index out of range in '" + c + "'");
            cfg.coupling[i][j] = KeyValueFile::to_double(w[2], "network.coupling");
        }
    }

    const auto joints = kv.all("network.joint");
    if (!joints.empty()) {
        if (joints.size() != kNumJoints)
            throw ConfigError("network.joint must list all " + std::to_string(kNumJoints) + " joints");
        std::array<bool, kNumJoints> given{};
        for (const auto& line : joints) {
            const auto w = KeyValueFile::split_words(line);
            if (w.size() != 4 || w[2].size() < 2 || w[2][0] != 'g')
                throw ConfigError("network.joint expects '<name> <cpg> g<n> b<n>|-', got '" + line + "'");
            const Joint j = joint_from_name(w[0]);
            JointDrive d;
            d.cpg = static_cast<std::size_t>(KeyValueFile::to_int(w[1], "network.joint"));
            d.gain_id = static_cast<std::size_t>(KeyValueFile::to_int(w[2].substr(1), "network.joint") - 1);
            if (w[3] != "-") {
                if (w[3].size() < 2 || w[3][0] != 'b')
                    throw ConfigError("network.joint bias must be b<n> or '-', got '" + w[3] + "'");
                d.bias_id = static_cast<std::size_t>(KeyValueFile::to_int(w[3].substr(1), "network.joint") - 1);
            }
            cfg.drives[index(j)] = d;
            given[index(j)] = true;
        }
        for (std::size_t i = 0; i < kNumJoints; ++i)
            if (!given[i]) throw ConfigError("network.joint missing '" + std::string(kJointNames[i]) + "'");
    }
    cfg.validate();
    return cfg;
}

inline void write_network_config(KeyValueFile& kv, const CpgNetworkConfig& cfg) {
    auto join = [](const auto& arr) {
        std::string s;
        for (std::size_t i = 0; i < arr.size(); ++i) s += (i ? " " : "") + format_double(arr[i]);
        return s;
    };
    const auto& osc = cfg.oscillator;
    kv.set("network.kappa", format_double(osc.kappa));
    kv.set("network.tau0", format_double(osc.tau0));
    kv.set("network.tau0_prime", format_double(osc.tau0_prime));
    kv.set("network.beta", format_double(osc.beta));
    kv.set("network.w0", format_double(osc.w0));
    kv.set("network.ut", format_double(osc.ut));
    kv.set("network.feedback_weight", format_double(cfg.feedback_weight));
    kv.set("network.pacemaker", std::to_string(cfg.pacemaker));
    kv.set("network.gains", join(cfg.gains));
    kv.set("network.biases", join(cfg.biases));
    const auto& s = cfg.initial_state;
    kv.set("network.initial_state", join(std::array{s.ue, s.uf, s.ve, s.vf}));
    std::string mirrored;
    for (std::size_t i = 0; i < kNumCpgs; ++i)
        if (cfg.mirrored_initial[i]) mirrored += (mirrored.empty() ? "" : " ") + std::to_string(i);
    kv.set("network.mirrored_initial", mirrored);
    for (std::size_t i = 0; i < kNumCpgs; ++i)
        for (std::size_t j = 0; j < kNumCpgs; ++j)
            if (cfg.coupling[i][j] != 0.0)
                kv.add("network.coupling",
                       std::to_string(i) + " " + std::to_string(j) + " " + format_double(cfg.coupling[i][j]));
    for (std::size_t jn = 0; jn < kNumJoints; ++jn) {
        const auto& d = cfg.drives[jn];
        kv.add("network.joint", std::string(kJointNames[jn]) + " " + std::to_string(d.cpg) + " g" +
                                    std::to_string(d.gain_id + 1) + " " +
                                    (d.bias_id ? "b" + std::to_string(*d.bias_id + 1) : std::string("-")));
    }
}

}  // namespace cpgloco
