#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cpgloco/cpg_network.hpp"
#include "cpgloco/phase.hpp"

using namespace cpgloco;

namespace {

constexpr double kDt = 0.01;

using Series = std::vector<std::vector<double>>;  // [joint][tick]

// Runs the network with ideal hip tracking: the measured hip angle is the
// previous tick's command. With closed = false the feedback angle is 0.
Series simulate(CpgNetwork& net, double seconds, bool closed = true, HipModulation psi = {}) {
    Series s(kNumJoints);
    double hl = 0.0, hr = 0.0;
    const auto n = static_cast<int>(std::llround(seconds / kDt));
    for (int i = 0; i < n; ++i) {
        const auto cmd = net.tick(psi, closed ? hl : 0.0, closed ? hr : 0.0, kDt);
        for (std::size_t j = 0; j < kNumJoints; ++j) s[j].push_back(cmd[j].theta);
        hl = cmd[index(Joint::hip_sag_l)].theta;
        hr = cmd[index(Joint::hip_sag_r)].theta;
    }
    return s;
}

Series simulate(const CpgNetworkConfig& cfg, double seconds, bool closed = true) {
    CpgNetwork net(cfg);
    return simulate(net, seconds, closed);
}

const std::vector<double>& of(const Series& s, Joint j) { return s[index(j)]; }

void randomize_states(CpgNetwork& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (std::size_t i = 0; i < kNumCpgs; ++i)
        net.set_state(i, {u(rng), u(rng), std::abs(u(rng)), std::abs(u(rng))});
}

struct LockCount {
    int related = 0, off = 0, silent = 0;
};

LockCount count_locks(const CpgNetworkConfig& reference, const Series& s) {
    LockCount c;
    for (std::size_t a = 0; a < kNumJoints; ++a)
        for (std::size_t b = a + 1; b < kNumJoints; ++b) {
            const double rel = reference.relation(static_cast<Joint>(a), static_cast<Joint>(b));
            if (rel == 0.0) continue;
            ++c.related;
            try {
                const double ph = phase_difference(s[a], s[b], kDt, 5.0);
                if (phase_distance(ph, rel > 0 ? 0.0 : std::numbers::pi) >= 0.2) ++c.off;
            } catch (const NotOscillating&) {
                ++c.silent;
            }
        }
    return c;
}

}  // namespace

TEST(Topology, StatedPhaseRelations) {
    const auto cfg = default_topology();
    EXPECT_EQ(cfg.relation(Joint::hip_sag_l, Joint::hip_sag_r), -1.0);
    EXPECT_EQ(cfg.relation(Joint::hip_sag_l, Joint::shoulder_r), 1.0);
    EXPECT_EQ(cfg.relation(Joint::hip_sag_r, Joint::shoulder_l), 1.0);
    // The hip/shoulder relation is a direct excitatory link.
    const auto hip_l = cfg.drives[index(Joint::hip_sag_l)].cpg;
    const auto sh_r = cfg.drives[index(Joint::shoulder_r)].cpg;
    EXPECT_EQ(cfg.coupling[sh_r][hip_l], 1.0);
}

TEST(Topology, DocumentedDefaultRelations) {
    const auto cfg = default_topology();
    for (Joint side : {Joint::hip_sag_l, Joint::hip_sag_r}) {
        const Joint knee = is_left(side) ? Joint::knee_l : Joint::knee_r;
        const Joint ankle = is_left(side) ? Joint::ankle_sag_l : Joint::ankle_sag_r;
        EXPECT_EQ(cfg.relation(side, knee), 1.0);
        EXPECT_EQ(cfg.relation(side, ankle), 1.0);
    }
    EXPECT_EQ(cfg.relation(Joint::hip_front_l, Joint::ankle_front_l), 1.0);
    EXPECT_EQ(cfg.relation(Joint::hip_front_r, Joint::ankle_front_r), 1.0);
    EXPECT_EQ(cfg.relation(Joint::hip_front_l, Joint::hip_front_r), -1.0);
}

TEST(Topology, PassesOwnInvariants) {
    const auto cfg = default_topology();
    EXPECT_NO_THROW(cfg.validate());
    for (std::size_t i = 0; i < kNumCpgs; ++i) EXPECT_EQ(cfg.coupling[i][i], 0.0);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
        const auto joint = static_cast<Joint>(j);
        EXPECT_NE(cfg.drives[j].cpg, cfg.pacemaker);
        if (is_frontal(joint)) {
            EXPECT_FALSE(cfg.drives[j].bias_id.has_value());
        }
        EXPECT_EQ(cfg.joint_gain(joint), cfg.joint_gain(mirror(joint)));
        EXPECT_EQ(cfg.joint_bias(joint), cfg.joint_bias(mirror(joint)));
    }
    EXPECT_DOUBLE_EQ(cfg.joint_gain(Joint::hip_sag_l), 0.3777);
    EXPECT_DOUBLE_EQ(cfg.joint_bias(Joint::hip_sag_l), -0.0519);
    EXPECT_DOUBLE_EQ(cfg.feedback_weight, 1.5364);
    EXPECT_DOUBLE_EQ(cfg.oscillator.kappa, 0.3178);
}

TEST(Topology, ValidationRejectsBrokenConfigs) {
    auto cfg = default_topology();
    cfg.coupling[3][3] = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_topology();
    for (std::size_t j = 0; j < kNumCpgs; ++j) cfg.coupling[5][j] = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);  // CPG 5 unreachable

    cfg = default_topology();
    cfg.drives[index(Joint::hip_front_l)].bias_id = 1;
    cfg.drives[index(Joint::hip_front_r)].bias_id = 1;
    EXPECT_THROW(cfg.validate(), ConfigError);  // frontal bias

    cfg = default_topology();
    cfg.drives[index(Joint::knee_l)].gain_id = 4;
    EXPECT_THROW(cfg.validate(), ConfigError);  // asymmetric gain id

    cfg = default_topology();
    cfg.coupling[1][2] = 0.5;
    EXPECT_THROW(cfg.validate(), ConfigError);

    cfg = default_topology();
    cfg.drives[index(Joint::knee_l)].cpg = cfg.pacemaker;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(JointTarget, HipModulationArithmetic) {
    EXPECT_NEAR(joint_target(0.5, 1.0, 0.3777, -0.0519), 0.13695, 1e-15);
    // psi = 1 leaves the plain o * g + b.
    EXPECT_EQ(joint_target(0.37, 1.0, 0.3777, -0.0519), 0.37 * 0.3777 + -0.0519);
    EXPECT_EQ(joint_target(0.37, 0.0, 0.3777, -0.0519), -0.0519);
}

TEST(Tick, UnitModulationIsPlainGainAndBias) {
    CpgNetwork net(default_topology());
    const auto& cfg = net.config();
    for (int i = 0; i < 300; ++i) {
        const auto cmd = net.tick({1.0, 1.0}, 0.0, 0.0, kDt);
        for (std::size_t j = 0; j < kNumJoints; ++j) {
            const auto joint = static_cast<Joint>(j);
            const double o = net.outputs()[cfg.drives[j].cpg];
            EXPECT_EQ(cmd[j].theta, o * cfg.joint_gain(joint) + cfg.joint_bias(joint));
            EXPECT_EQ(cmd[j].joint, joint);
        }
    }
}

TEST(Tick, PsiScalesOnlyTheSagittalHips) {
    CpgNetwork a(default_topology()), b(default_topology());
    const double b1 = -0.0519;
    for (int i = 0; i < 300; ++i) {
        // Open loop so both networks see identical inputs.
        const auto ca = a.tick({1.0, 1.0}, 0.0, 0.0, kDt);
        const auto cb = b.tick({0.4, 0.7}, 0.0, 0.0, kDt);
        EXPECT_NEAR(cb[0].theta - b1, 0.4 * (ca[0].theta - b1), 1e-15);
        EXPECT_NEAR(cb[1].theta - b1, 0.7 * (ca[1].theta - b1), 1e-15);
        for (std::size_t j = 2; j < kNumJoints; ++j) EXPECT_EQ(ca[j].theta, cb[j].theta);
    }
}

TEST(Tick, RejectsInvalidInputs) {
    CpgNetwork net(default_topology());
    EXPECT_THROW((void)net.tick({1.2, 1.0}, 0.0, 0.0, kDt), std::invalid_argument);
    EXPECT_THROW((void)net.tick({1.0, -0.1}, 0.0, 0.0, kDt), std::invalid_argument);
    EXPECT_THROW((void)net.tick({1.0, 1.0}, NAN, 0.0, kDt), std::invalid_argument);
    EXPECT_THROW((void)net.tick({1.0, 1.0}, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Tick, UncoupledNetworkMatchesIsolatedOscillators) {
    auto cfg = default_topology();
    cfg.coupling = {};
    cfg.feedback_weight = 0.0;
    CpgNetwork net(cfg, false);
    const auto series = simulate(net, 20.0);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
        const auto joint = static_cast<Joint>(j);
        OscillatorState s = cfg.initial_state_of(cfg.drives[j].cpg);
        for (std::size_t t = 0; t < series[j].size(); ++t) {
            s = step(s, cfg.oscillator, {}, kDt);
            ASSERT_EQ(series[j][t], output(s) * cfg.joint_gain(joint) + cfg.joint_bias(joint))
                << kJointNames[j] << " tick " << t;
        }
    }
}

TEST(Tick, GainLinearity) {
    // Open loop, every gain; closed loop, the gains that do not feed back.
    for (bool closed : {false, true}) {
        const auto base_cfg = default_topology();
        const auto base = simulate(base_cfg, 15.0, closed);
        for (std::size_t g = closed ? 1 : 0; g < kNumGains; ++g) {
            auto cfg = base_cfg;
            cfg.gains[g] *= 2.0;
            const auto twice = simulate(cfg, 15.0, closed);
            for (std::size_t j = 0; j < kNumJoints; ++j) {
                const auto joint = static_cast<Joint>(j);
                if (cfg.drives[j].gain_id != g) {
                    if (!closed) {
                        EXPECT_EQ(base[j], twice[j]);
                    }
                    continue;
                }
                const double b = cfg.joint_bias(joint);
                for (std::size_t t = 0; t < base[j].size(); ++t)
                    ASSERT_NEAR(twice[j][t] - b, 2.0 * (base[j][t] - b), 1e-12) << kJointNames[j];
            }
        }
    }
}

TEST(Tick, ClampingIsCountedAndBounded) {
    auto cfg = default_topology();
    cfg.gains[4] = 40.0;  // frontal ankle
    CpgNetwork net(cfg);
    const auto s = simulate(net, 10.0);
    EXPECT_GT(net.clamp_count(), 0u);
    for (const auto& joint : s)
        for (double th : joint) EXPECT_LE(std::abs(th), std::numbers::pi);
}

TEST(Tick, DeterministicAcrossInstances) {
    const auto a = simulate(default_topology(), 10.0);
    const auto b = simulate(default_topology(), 10.0);
    EXPECT_EQ(a, b);
}

TEST(Tick, ResetRestoresInitialTrajectory) {
    CpgNetwork net(default_topology());
    const auto first = simulate(net, 5.0);
    net.reset();
    EXPECT_EQ(simulate(net, 5.0), first);
}

TEST(PhaseDifference, Examples) {
    std::vector<double> a, neg, lag;
    for (int i = 0; i < 2000; ++i) {
        const double t = i * kDt;
        a.push_back(std::sin(2.0 * std::numbers::pi * t / 1.5));
        neg.push_back(-a.back());
        lag.push_back(std::sin(2.0 * std::numbers::pi * t / 1.5 - 0.5));
    }
    EXPECT_NEAR(phase_difference(a, a, kDt, 2.0), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(phase_difference(a, neg, kDt, 2.0)), std::numbers::pi, 1e-2);
    EXPECT_NEAR(phase_difference(a, lag, kDt, 2.0), 0.5, 2e-2);  // b lags a
}

TEST(PhaseDifference, RejectsFlatSignals) {
    std::vector<double> a(1000, 0.3), b(1000, 0.0);
    for (int i = 0; i < 1000; ++i) b[i] = std::sin(i * 0.05);
    EXPECT_THROW((void)phase_difference(a, b, kDt, 1.0), NotOscillating);
    EXPECT_THROW((void)phase_difference(a, std::vector<double>(999), kDt, 1.0), std::invalid_argument);
}

TEST(PhaseLocking, SagittalHipsAntiPhase) {
    const auto s = simulate(default_topology(), 40.0);
    const double ph = phase_difference(of(s, Joint::hip_sag_l), of(s, Joint::hip_sag_r), kDt, 5.0);
    EXPECT_LT(phase_distance(ph, std::numbers::pi), 0.2);
}

TEST(PhaseLocking, EveryRelatedPairLocks) {
    const auto cfg = default_topology();
    const auto c = count_locks(cfg, simulate(cfg, 40.0));
    EXPECT_EQ(c.related, 66);
    EXPECT_EQ(c.off, 0);
    EXPECT_EQ(c.silent, 0);
}

TEST(PhaseLocking, LocksFromRandomInitialStates) {
    const auto cfg = default_topology();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        CpgNetwork net(cfg);
        randomize_states(net, seed);
        const auto c = count_locks(cfg, simulate(net, 60.0));
        EXPECT_EQ(c.off + c.silent, 0) << "seed " << seed;
    }
}

TEST(PhaseLocking, PacemakerAblationDestroysLocking) {
    // The pacemaker and its half-center partner together form the pacemaker
    // circuit; both lose their outgoing drive.
    const auto cfg = default_topology();
    const std::size_t partner = cfg.drives[index(Joint::ankle_front_r)].cpg;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto ablated = cfg;
        for (std::size_t i = 0; i < kNumCpgs; ++i) {
            ablated.coupling[i][cfg.pacemaker] = 0.0;
            ablated.coupling[i][partner] = 0.0;
        }
        EXPECT_THROW(ablated.validate(), ConfigError);
        CpgNetwork net(ablated, false);
        randomize_states(net, seed);
        const auto c = count_locks(cfg, simulate(net, 60.0));
        EXPECT_GT(c.off + c.silent, c.related / 2) << "seed " << seed;
    }
}

TEST(Symmetry, OpenLoopMirrorIsExact) {
    // Mirrored initial states and an antisymmetric drive: every right-side
    // CPG output is the negated left one.
    CpgNetwork net(default_topology());
    const auto& cfg = net.config();
    for (int i = 0; i < 3000; ++i) {
        (void)net.tick({0.8, 0.8}, 0.0, 0.0, kDt);
        for (Joint j : {Joint::hip_sag_l, Joint::knee_l, Joint::ankle_sag_l, Joint::hip_front_l, Joint::shoulder_l}) {
            const double l = net.outputs()[cfg.drives[index(j)].cpg];
            const double r = net.outputs()[cfg.drives[index(mirror(j))].cpg];
            ASSERT_NEAR(l, -r, 1e-12) << kJointNames[index(j)] << " tick " << i;
        }
    }
}

TEST(Symmetry, ClosedLoopHalfPeriodShift) {
    const auto cfg = default_topology();
    const auto s = simulate(cfg, 60.0);
    // Period from the left hip's upward crossings of its mean after 10 s.
    const auto& hl = of(s, Joint::hip_sag_l);
    const auto& hr = of(s, Joint::hip_sag_r);
    double mean = 0.0;
    for (std::size_t i = 1000; i < hl.size(); ++i) mean += hl[i];
    mean /= static_cast<double>(hl.size() - 1000);
    std::vector<std::size_t> ups;
    for (std::size_t i = 1001; i < hl.size(); ++i)
        if (hl[i - 1] < mean && hl[i] >= mean) ups.push_back(i);
    ASSERT_GE(ups.size(), 3u);
    const double period = static_cast<double>(ups.back() - ups.front()) / static_cast<double>(ups.size() - 1);
    const auto half = static_cast<std::size_t>(std::llround(period / 2.0));
    double amp = 0.0, worst = 0.0;
    for (std::size_t i = 1000; i + half < hl.size(); ++i) {
        amp = std::max(amp, std::abs(hl[i] - mean));
        worst = std::max(worst, std::abs(hr[i + half] - hl[i]));
    }
    EXPECT_LT(worst / amp, 0.1);
}

TEST(Config, RoundTripThroughKeyValueFile) {
    auto cfg = default_topology();
    cfg.gains[2] = 0.125;
    cfg.feedback_weight = -0.75;
    KeyValueFile kv;
    write_network_config(kv, cfg);
    const auto back = network_config_from(KeyValueFile::parse(kv.to_string()));
    EXPECT_EQ(back.coupling, cfg.coupling);
    EXPECT_EQ(back.gains, cfg.gains);
    EXPECT_EQ(back.biases, cfg.biases);
    EXPECT_EQ(back.feedback_weight, cfg.feedback_weight);
    EXPECT_EQ(back.mirrored_initial, cfg.mirrored_initial);
    EXPECT_EQ(back.initial_state, cfg.initial_state);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
        EXPECT_EQ(back.drives[j].cpg, cfg.drives[j].cpg);
        EXPECT_EQ(back.drives[j].gain_id, cfg.drives[j].gain_id);
        EXPECT_EQ(back.drives[j].bias_id, cfg.drives[j].bias_id);
    }
    EXPECT_EQ(simulate(back, 5.0), simulate(cfg, 5.0));
}

TEST(Config, OverridesAndErrors) {
    const auto cfg = network_config_from(KeyValueFile::parse("network.kappa = 0.5\nnetwork.gains = 0.1 0.2 0.3 0.4 0.5 0.6\n"));
    EXPECT_EQ(cfg.oscillator.kappa, 0.5);
    EXPECT_EQ(cfg.gains[5], 0.6);
    EXPECT_THROW((void)network_config_from(KeyValueFile::parse("network.gains = 0.1 0.2\n")), ConfigError);
    EXPECT_THROW((void)network_config_from(KeyValueFile::parse("network.coupling = 1 1 1\n")), ConfigError);
    EXPECT_THROW((void)network_config_from(KeyValueFile::parse("network.coupling = 1 99 1\n")), ConfigError);
    EXPECT_THROW((void)network_config_from(KeyValueFile::parse("network.kappa = -1\n")), std::exception);
    EXPECT_THROW((void)network_config_from(KeyValueFile::parse("network.joint = knee_l 5 g2 b2\n")), ConfigError);
}

TEST(KeyValue, ParsingRules) {
    const auto kv = KeyValueFile::parse("# comment\n a = 1 \n\nb=two words\nb = again\n");
    EXPECT_EQ(kv.get_string("a", ""), "1");
    EXPECT_EQ(kv.all("b").size(), 2u);
    EXPECT_EQ(kv.get_int("a", 0), 1);
    EXPECT_EQ(kv.get_double("missing", 2.5), 2.5);
    EXPECT_THROW((void)KeyValueFile::parse("no equals sign\n"), ConfigError);
    EXPECT_THROW((void)kv.get_double("b", 0.0), ConfigError);
}

TEST(KeyValue, FormatDoubleRoundTrips) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
}
