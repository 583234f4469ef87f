#pragma once

// Deterministic policy-gradient actor-critic: replay buffer, OU exploration
// noise, target networks, reward and the 1 Hz episode loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "cpgloco/env.hpp"
#include "cpgloco/mlp.hpp"

namespace cpgloco {

inline constexpr std::size_t kStateDim = TorsoState::size;
inline constexpr std::size_t kActionDim = 2;

struct Transition {
    StateVector s{};
    Phi a{};
    double r = 0.0;
    StateVector s_next{};
    bool done = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Fixed-capacity FIFO ring.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
        data_.reserve(std::min<std::size_t>(capacity, 4096));
    }

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[head_] = t;
            head_ = (head_ + 1) % capacity_;
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }

    /// i-th oldest transition still stored.
    [[nodiscard]] const Transition& at(std::size_t i) const {
        if (i >= data_.size()) throw std::out_of_range("replay index out of range");
        return data_[(head_ + i) % data_.size()];
    }

    template <typename Rng>
    [[nodiscard]] std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (batch == 0 || batch > data_.size()) throw std::logic_error("replay buffer holds fewer transitions than batch");
        std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
        std::vector<const Transition*> out(batch);
        for (auto& p : out) p = &data_[pick(rng)];
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // oldest element once full
    std::vector<Transition> data_;
};

/// Ornstein-Uhlenbeck process, one independent component per action.
class OuNoise {
public:
    OuNoise(double theta = 0.15, double sigma = 0.2, double mu = 0.0, double dt = 1.0)
        : theta_(theta), sigma_(sigma), mu_(mu), dt_(dt) {
        reset();
    }

    void reset() { x_.fill(mu_); }

    template <typename Rng>
    Phi sample(Rng& rng) {
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& x : x_) x += theta_ * (mu_ - x) * dt_ + sigma_ * std::sqrt(dt_) * n(rng);
        return x_;
    }

private:
    double theta_, sigma_, mu_, dt_;
    Phi x_{};
};

struct RewardWeights {
    double zeta_dev = 1.0;
    double zeta_dist = 0.5;
    double zeta_gamma = 1.0;
    double xi = 0.1;

    void validate() const {
        if (!(zeta_dev >= 0.0) || !(zeta_dist >= 0.0) || !(zeta_gamma >= 0.0))
            throw ConfigError("reward weights must be >= 0");
        if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("xi must lie in [0, 1]");
    }
};

inline constexpr double kFallReward = -100.0;

[[nodiscard]] inline double reward(const EpisodeMetrics& m, const RewardWeights& w, bool fell) {
    if (fell) return kFallReward;
    return -w.zeta_dev * std::abs(m.d_y) + w.zeta_dist * m.d_x - w.zeta_gamma * std::abs(m.gamma_final);
}

struct DdpgConfig {
    double discount = 0.99;
    double tau = 0.001;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double critic_weight_decay = 1e-2;
    std::size_t batch = 64;
    std::size_t buffer_capacity = 100000;
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    std::size_t episodes = 1000;
    double episode_length = 40.0;  // s
    double action_period = 1.0;    // s
    std::size_t eval_every = 10;
    std::size_t checkpoint_every = 50;

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("ddpg: tau must lie in (0, 1]");
        if (!(discount >= 0.0 && discount <= 1.0)) throw ConfigError("ddpg: discount must lie in [0, 1]");
        if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("ddpg: learning rates must be positive");
        if (!(critic_weight_decay >= 0.0)) throw ConfigError("ddpg: weight decay must be >= 0");
        if (batch == 0 || batch > buffer_capacity) throw ConfigError("ddpg: batch must lie in [1, buffer capacity]");
        if (!(ou_theta >= 0.0) || !(ou_sigma >= 0.0)) throw ConfigError("ddpg: OU parameters must be >= 0");
        if (!(episode_length > 0.0) || !(action_period > 0.0) || action_period > episode_length)
            throw ConfigError("ddpg: invalid episode length or action period");
        if (eval_every == 0) throw ConfigError("ddpg: eval_every must be positive");
    }
};

/// target <- tau * online + (1 - tau) * target, elementwise.
inline void soft_update(NetworkParams& target, const NetworkParams& online, double tau) {
    if (!target.same_shape(online)) throw ShapeError("soft update: shape mismatch");
    std::vector<const double*> src;
    online.for_each_tensor([&](const double* p, std::size_t) { src.push_back(p); });
    std::size_t k = 0;
    target.for_each_tensor([&](double* p, std::size_t n) {
        const double* s = src[k++];
        for (std::size_t i = 0; i < n; ++i) p[i] = tau * s[i] + (1.0 - tau) * p[i];
    });
}

struct Agent {
    NetworkParams actor, critic, target_actor, target_critic;
    AdamState actor_opt, critic_opt;

    template <typename Rng>
    static Agent create(Rng& rng, std::size_t state_dim = kStateDim, std::size_t action_dim = kActionDim) {
        Agent a;
        a.actor = init_params(actor_specs(state_dim, action_dim), rng);
        a.critic = init_params(critic_specs(state_dim), rng, action_dim, 1);
        a.target_actor = a.actor;
        a.target_critic = a.critic;
        a.actor_opt = AdamState(a.actor);
        a.critic_opt = AdamState(a.critic);
        return a;
    }

    [[nodiscard]] Phi act(const StateVector& s) const {
        const Vector x = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
        const Vector y = actor_forward(actor, x);
        return {y(0), y(1)};
    }
};

struct TrainLosses {
    double critic_loss = 0.0;
    double mean_q = 0.0;
};

/// Critic target r + discount * (1 - done) * Q'(s', mu'(s')).
[[nodiscard]] inline double critic_target(double r, bool done, double discount, double q_next) {
    return done ? r : r + discount * q_next;
}

/// One minibatch update of critic, actor and both target networks.
template <typename Rng>
TrainLosses train_step(Agent& agent, const ReplayBuffer& buffer, const DdpgConfig& cfg, Rng& rng) {
    const auto batch = buffer.sample(cfg.batch, rng);
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto sd = static_cast<Eigen::Index>(agent.actor.input_dim());
    const auto ad = static_cast<Eigen::Index>(agent.actor.output_dim());
    Matrix s(sd, n), s2(sd, n), a(ad, n);
    Vector r(n), done(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = *batch[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < sd; ++i) {
            s(i, j) = t.s[static_cast<std::size_t>(i)];
            s2(i, j) = t.s_next[static_cast<std::size_t>(i)];
        }
        for (Eigen::Index i = 0; i < ad; ++i) a(i, j) = t.a[static_cast<std::size_t>(i)];
        r(j) = t.r;
        done(j) = t.done ? 1.0 : 0.0;
    }

    // Critic: squared TD error plus L2 decay on weight matrices.
    const Matrix a2 = forward(agent.target_actor, s2).output();
    const Matrix q2 = forward(agent.target_critic, s2, a2).output();
    Matrix y(1, n);
    for (Eigen::Index j = 0; j < n; ++j) y(0, j) = critic_target(r(j), done(j) > 0.5, cfg.discount, q2(0, j));
    const auto qc = forward(agent.critic, s, a);
    const Matrix err = qc.output() - y;
    TrainLosses losses;
    losses.critic_loss = err.squaredNorm() / static_cast<double>(n);
    losses.mean_q = qc.output().mean();
    auto cg = backward(agent.critic, qc, s, (2.0 / static_cast<double>(n)) * err, a).grads;
    for (std::size_t l = 0; l < cg.weights.size(); ++l)
        cg.weights[l] += cfg.critic_weight_decay * agent.critic.weights[l];
    cg.side_weights += cfg.critic_weight_decay * agent.critic.side_weights;
    adam_update(agent.critic, cg, agent.critic_opt, cfg.critic_lr);

    // Actor: ascend Q(s, mu(s)) through the updated critic.
    const auto pa = forward(agent.actor, s);
    const auto qa = forward(agent.critic, s, pa.output());
    const Matrix dq = Matrix::Constant(1, n, -1.0 / static_cast<double>(n));
    const Matrix da = backward(agent.critic, qa, s, dq, pa.output()).d_side;
    const auto ag = backward(agent.actor, pa, s, da).grads;
    adam_update(agent.actor, ag, agent.actor_opt, cfg.actor_lr);

    soft_update(agent.target_critic, agent.critic, cfg.tau);
    soft_update(agent.target_actor, agent.actor, cfg.tau);
    return losses;
}

struct StepRecord {
    double t = 0.0;
    StateVector s{};
    Phi a{};
    HipModulation psi;
    double r = 0.0;
    bool done = false;
};

struct EpisodeResult {
    std::vector<StepRecord> steps;
    double episode_return = 0.0;
    EpisodeMetrics metrics;
};

/// Runs one episode: every action period observe s, query the policy, clip
/// to [0, 1]^2, hold the action, score it. `on_transition` sees every
/// transition (training stores and learns there).
template <typename Env, typename Policy, typename OnTransition>
EpisodeResult run_episode(Env& env, Policy&& policy, const RewardWeights& weights, double episode_length,
                          double action_period, OnTransition&& on_transition, const TickObserver& observer = {}) {
    EpisodeResult out;
    StateVector s = env.state();
    const double end = episode_length - 1e-9;
    while (env.time() < end && !env.fallen()) {
        Phi a = policy(s);
        for (double& v : a) v = std::clamp(v, 0.0, 1.0);
        const double period = std::min(action_period, episode_length - env.time());
        const HipModulation psi = env.act(a, period, observer);
        const bool fell = env.fallen();
        const double r = reward(env.metrics(), weights, fell);
        const bool done = fell || env.time() >= end;
        const StateVector s2 = env.state();
        out.steps.push_back({env.time(), s, a, psi, r, done});
        out.episode_return += r;
        on_transition(Transition{s, a, r, s2, done});
        s = s2;
    }
    out.metrics = env.metrics();
    return out;
}

}  // namespace cpgloco
