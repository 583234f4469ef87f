#pragma once

// Experiment wiring shared by the command-line tool and the acceptance
// suite: configuration, presets, GA/training/test/trace runs and their
// output files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpgloco/ddpg.hpp"
#include "cpgloco/ga.hpp"
#include "cpgloco/log.hpp"

#ifndef CPGLOCO_VERSION
#define CPGLOCO_VERSION "0.0.0"
#endif

namespace cpgloco {

namespace fs = std::filesystem;

class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SetupSpec {
    std::string name;
    RewardWeights weights;
};

struct LinearSpec {
    std::string name;
    LinearControllerConfig controller;
};

[[nodiscard]] inline std::vector<SetupSpec> default_setups() {
    return {{"S1", {1.0, 0.5, 1.0, 0.1}},
            {"S2", {1.0, 0.5, 1.0, 0.4}},
            {"S3", {1.0, 0.3, 1.0, 0.1}},
            {"S4", {1.0, 0.3, 1.0, 0.4}}};
}

[[nodiscard]] inline std::vector<LinearSpec> default_linear() { return {{"L1", {0.2, 0.1}}, {"L2", {0.4, 0.1}}}; }

enum class Preset { desk, paper };

[[nodiscard]] inline Preset preset_from_string(const std::string& s) {
    if (s == "desk") return Preset::desk;
    if (s == "paper") return Preset::paper;
    throw ConfigError("unknown preset '" + s + "' (expected desk or paper)");
}

[[nodiscard]] inline const char* to_string(Preset p) { return p == Preset::desk ? "desk" : "paper"; }

struct ExperimentConfig {
    Preset preset = Preset::desk;
    std::uint64_t seed = 1;
    PlantConfig plant;
    CpgNetworkConfig network = default_topology();
    GaConfig ga;
    DdpgConfig ddpg;
    std::size_t test_episodes = 20;
    std::size_t threads = 0;
    std::vector<SetupSpec> setups = default_setups();
    std::vector<LinearSpec> linear = default_linear();
    std::map<std::string, std::string> checkpoints;  // setup -> actor checkpoint path
    KeyValueFile source;                             // effective configuration

    [[nodiscard]] const SetupSpec* find_setup(const std::string& name) const {
        for (const auto& s : setups)
            if (s.name == name) return &s;
        return nullptr;
    }
    [[nodiscard]] const LinearSpec* find_linear(const std::string& name) const {
        for (const auto& l : linear)
            if (l.name == name) return &l;
        return nullptr;
    }

    [[nodiscard]] std::string setup_names() const {
        std::string out = "S0";
        for (const auto& l : linear) out += ", " + l.name;
        for (const auto& s : setups) out += ", " + s.name;
        return out;
    }
};

inline void apply_preset(ExperimentConfig& cfg, Preset p) {
    cfg.preset = p;
    if (p == Preset::desk) {
        cfg.ga.population = 20;
        cfg.ga.generations = 10;
        cfg.ddpg.episodes = 150;
        cfg.test_episodes = 20;
    } else {
        cfg.ga.population = 200;
        cfg.ga.generations = 30;
        cfg.ddpg.episodes = 1000;
        cfg.test_episodes = 100;
    }
}

// ---------------------------------------------------------------------------
// Experiment config keys (besides plant.* and network.*):
//   preset = desk|paper        seed = <u64>        threads = <n>
//   network.file = <path>      network config written by `optimize`
//   ga.population ga.generations ga.tournament_size ga.crossover_probability
//   ga.mutation_chromosome_probability ga.mutation_gene_probability
//   ga.mutation_variance ga.horizon ga.elitism ga.plant_seed
//   ddpg.discount ddpg.tau ddpg.actor_lr ddpg.critic_lr ddpg.critic_weight_decay
//   ddpg.batch ddpg.buffer_capacity ddpg.ou_theta ddpg.ou_sigma ddpg.episodes
//   ddpg.episode_length ddpg.action_period ddpg.eval_every ddpg.checkpoint_every
//   test.episodes
//   setup = <name> <zeta_dev> <zeta_dist> <zeta_gamma> <xi>     (repeatable)
//   linear = <name> <G> <xi>                                    (repeatable)
//   checkpoint.<setup> = <actor checkpoint path>
// Precedence: preset defaults < config file < command-line flags.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t get_count(const KeyValueFile& kv, std::string_view key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("key '" + std::string(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

[[nodiscard]] inline ExperimentConfig load_experiment(const KeyValueFile& kv, std::optional<std::string> preset = {},
                                                      std::optional<std::uint64_t> seed = {},
                                                      const fs::path& base_dir = ".") {
    ExperimentConfig cfg;
    apply_preset(cfg, preset_from_string(preset.value_or(kv.get_string("preset", "desk"))));
    const long long s = kv.get_int("seed", 1);
    if (s < 0) throw ConfigError("seed must be non-negative");
    cfg.seed = seed.value_or(static_cast<std::uint64_t>(s));
    cfg.threads = detail::get_count(kv, "threads", 0);
    cfg.plant = plant_config_from(kv);

    if (const auto* file = kv.find("network.file")) {
        fs::path p = *file;
        if (p.is_relative()) p = base_dir / p;
        if (!fs::exists(p)) throw MissingInput("network file '" + p.string() + "' does not exist");
        KeyValueFile net = KeyValueFile::load(p.string());
        for (const auto& [k, v] : kv.entries())
            if (k.rfind("network.", 0) == 0 && k != "network.file") net.add(k, v);
        cfg.network = network_config_from(net);
    } else {
        cfg.network = network_config_from(kv);
    }

    auto& ga = cfg.ga;
    ga.population = detail::get_count(kv, "ga.population", ga.population);
    ga.generations = detail::get_count(kv, "ga.generations", ga.generations);
    ga.tournament_size = detail::get_count(kv, "ga.tournament_size", ga.tournament_size);
    ga.crossover_probability = kv.get_double("ga.crossover_probability", ga.crossover_probability);
    ga.mutation_chromosome_probability =
        kv.get_double("ga.mutation_chromosome_probability", ga.mutation_chromosome_probability);
    ga.mutation_gene_probability = kv.get_double("ga.mutation_gene_probability", ga.mutation_gene_probability);
    ga.mutation_variance = kv.get_double("ga.mutation_variance", ga.mutation_variance);
    ga.horizon = kv.get_double("ga.horizon", ga.horizon);
    ga.elitism = detail::get_count(kv, "ga.elitism", ga.elitism);
    ga.plant_seed = static_cast<std::uint64_t>(detail::get_count(kv, "ga.plant_seed", ga.plant_seed));
    ga.threads = cfg.threads;
    ga.validate();

    auto& d = cfg.ddpg;
    d.discount = kv.get_double("ddpg.discount", d.discount);
    d.tau = kv.get_double("ddpg.tau", d.tau);
    d.actor_lr = kv.get_double("ddpg.actor_lr", d.actor_lr);
    d.critic_lr = kv.get_double("ddpg.critic_lr", d.critic_lr);
    d.critic_weight_decay = kv.get_double("ddpg.critic_weight_decay", d.critic_weight_decay);
    d.batch = detail::get_count(kv, "ddpg.batch", d.batch);
    d.buffer_capacity = detail::get_count(kv, "ddpg.buffer_capacity", d.buffer_capacity);
    d.ou_theta = kv.get_double("ddpg.ou_theta", d.ou_theta);
    d.ou_sigma = kv.get_double("ddpg.ou_sigma", d.ou_sigma);
    d.episodes = detail::get_count(kv, "ddpg.episodes", d.episodes);
    d.episode_length = kv.get_double("ddpg.episode_length", d.episode_length);
    d.action_period = kv.get_double("ddpg.action_period", d.action_period);
    d.eval_every = detail::get_count(kv, "ddpg.eval_every", d.eval_every);
    d.checkpoint_every = detail::get_count(kv, "ddpg.checkpoint_every", d.checkpoint_every);
    d.validate();

    cfg.test_episodes = detail::get_count(kv, "test.episodes", cfg.test_episodes);
    if (cfg.test_episodes == 0) throw ConfigError("test.episodes must be positive");

    for (const auto& line : kv.all("setup")) {
        const auto w = KeyValueFile::split_words(line);
        if (w.size() != 5) throw ConfigError("setup expects '<name> <zeta_dev> <zeta_dist> <zeta_gamma> <xi>'");
        SetupSpec spec{w[0], {KeyValueFile::to_double(w[1], "setup"), KeyValueFile::to_double(w[2], "setup"),
                              KeyValueFile::to_double(w[3], "setup"), KeyValueFile::to_double(w[4], "setup")}};
        spec.weights.validate();
        if (spec.name == "S0" || spec.name.rfind('L', 0) == 0)
            throw ConfigError("setup name '" + spec.name + "' is reserved");
        auto it = std::find_if(cfg.setups.begin(), cfg.setups.end(), [&](auto& s) { return s.name == spec.name; });
        if (it != cfg.setups.end()) *it = spec;
        else cfg.setups.push_back(spec);
    }
    for (const auto& line : kv.all("linear")) {
        const auto w = KeyValueFile::split_words(line);
        if (w.size() != 3 || w[0].rfind('L', 0) != 0) throw ConfigError("linear expects 'L<n> <G> <xi>'");
        LinearSpec spec{w[0], {KeyValueFile::to_double(w[1], "linear"), KeyValueFile::to_double(w[2], "linear")}};
        try {
            spec.controller.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("linear: ") + e.what());
        }
        auto it = std::find_if(cfg.linear.begin(), cfg.linear.end(), [&](auto& s) { return s.name == spec.name; });
        if (it != cfg.linear.end()) *it = spec;
        else cfg.linear.push_back(spec);
    }
    for (const auto& [k, v] : kv.entries())
        if (k.rfind("checkpoint.", 0) == 0) {
            fs::path p = v;
            if (p.is_relative()) p = base_dir / p;
            cfg.checkpoints[k.substr(11)] = p.string();
        }

    // Effective configuration snapshot.
    KeyValueFile snap;
    snap.set("preset", to_string(cfg.preset));
    snap.set("seed", std::to_string(cfg.seed));
    snap.set("threads", std::to_string(cfg.threads));
    write_plant_config(snap, cfg.plant);
    write_network_config(snap, cfg.network);
    auto count = [&](const std::string& k, std::size_t v) { snap.set(k, std::to_string(v)); };
    auto real = [&](const std::string& k, double v) { snap.set(k, format_double(v)); };
    count("ga.population", ga.population);
    count("ga.generations", ga.generations);
    count("ga.tournament_size", ga.tournament_size);
    real("ga.crossover_probability", ga.crossover_probability);
    real("ga.mutation_chromosome_probability", ga.mutation_chromosome_probability);
    real("ga.mutation_gene_probability", ga.mutation_gene_probability);
    real("ga.mutation_variance", ga.mutation_variance);
    real("ga.horizon", ga.horizon);
    count("ga.elitism", ga.elitism);
    count("ga.plant_seed", ga.plant_seed);
    real("ddpg.discount", d.discount);
    real("ddpg.tau", d.tau);
    real("ddpg.actor_lr", d.actor_lr);
    real("ddpg.critic_lr", d.critic_lr);
    real("ddpg.critic_weight_decay", d.critic_weight_decay);
    count("ddpg.batch", d.batch);
    count("ddpg.buffer_capacity", d.buffer_capacity);
    real("ddpg.ou_theta", d.ou_theta);
    real("ddpg.ou_sigma", d.ou_sigma);
    count("ddpg.episodes", d.episodes);
    real("ddpg.episode_length", d.episode_length);
    real("ddpg.action_period", d.action_period);
    count("ddpg.eval_every", d.eval_every);
    count("ddpg.checkpoint_every", d.checkpoint_every);
    count("test.episodes", cfg.test_episodes);
    for (const auto& s : cfg.setups)
        snap.add("setup", s.name + " " + format_double(s.weights.zeta_dev) + " " + format_double(s.weights.zeta_dist) +
                              " " + format_double(s.weights.zeta_gamma) + " " + format_double(s.weights.xi));
    for (const auto& l : cfg.linear)
        snap.add("linear", l.name + " " + format_double(l.controller.gain) + " " + format_double(l.controller.xi));
    for (const auto& [name, path] : cfg.checkpoints) snap.set("checkpoint." + name, path);
    cfg.source = snap;
    return cfg;
}

/// Loads a key = value config file, or the configuration snapshot of a run
/// manifest (manifest.json) so that the run can be repeated.
[[nodiscard]] inline ExperimentConfig load_experiment_file(const std::string& path,
                                                           std::optional<std::string> preset = {},
                                                           std::optional<std::uint64_t> seed = {}) {
    if (!fs::exists(path)) throw MissingInput("config file '" + path + "' does not exist");
    if (fs::path(path).extension() == ".json") {
        std::ifstream in(path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("manifest '" + path + "' is not valid JSON: " + e.what());
        }
        if (!doc.contains("config") || !doc["config"].is_string())
            throw ConfigError("manifest '" + path + "' has no config snapshot");
        return load_experiment(KeyValueFile::parse(doc["config"].get<std::string>(), path), std::move(preset), seed,
                               fs::path(path).parent_path());
    }
    return load_experiment(KeyValueFile::load(path), std::move(preset), seed, fs::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Seeds. Every rollout gets its plant seed from the run seed and its role.
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::uint64_t train_plant_seed(std::uint64_t seed, std::size_t episode) {
    return seed * 1000003ULL + episode;
}
[[nodiscard]] inline std::uint64_t eval_plant_seed(std::uint64_t seed, std::size_t eval) {
    return seed * 1000003ULL + 500000ULL + eval;
}
[[nodiscard]] inline std::uint64_t test_plant_seed(std::uint64_t seed, std::size_t episode) {
    return seed * 1000003ULL + 900000ULL + episode;
}

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

struct Unmodulated {};
struct LinearPolicy {
    LinearControllerConfig config;
};
struct NeuralPolicy {
    NetworkParams actor;
    double xi = 0.1;
};
using Controller = std::variant<Unmodulated, LinearPolicy, NeuralPolicy>;

[[nodiscard]] inline double controller_xi(const Controller& c) {
    return std::visit(
        [](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Unmodulated>) return 1.0;
            else if constexpr (std::is_same_v<T, LinearPolicy>) return p.config.xi;
            else return p.xi;
        },
        c);
}

[[nodiscard]] inline Phi controller_action(const Controller& c, const StateVector& s) {
    return std::visit(
        [&](const auto& p) -> Phi {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Unmodulated>) return {0.0, 0.0};
            else if constexpr (std::is_same_v<T, LinearPolicy>) return linear_control(s[7], p.config);
            else {
                const Vector x = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
                const Vector y = actor_forward(p.actor, x);
                return {y(0), y(1)};
            }
        },
        c);
}

/// FNV-1a over the raw bytes of every parameter.
[[nodiscard]] inline std::uint64_t params_checksum(const NetworkParams& p) {
    std::uint64_t h = 1469598103934665603ULL;
    p.for_each_tensor([&](const double* d, std::size_t n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(d);
        for (std::size_t i = 0; i < n * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    });
    return h;
}

/// Runs one noise-free episode of a controller with fixed parameters.
[[nodiscard]] inline EpisodeResult rollout(const ExperimentConfig& cfg, const Controller& controller,
                                           std::uint64_t plant_seed, const RewardWeights& weights,
                                           const TickObserver& observer = {}) {
    LocomotionEnv env(cfg.network, cfg.plant, controller_xi(controller));
    env.reset(plant_seed);
    return run_episode(
        env, [&](const StateVector& s) { return controller_action(controller, s); }, weights,
        cfg.ddpg.episode_length, cfg.ddpg.action_period, [](const Transition&) {}, observer);
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
        if (!out_) throw OutputError("cannot write '" + path.string() + "'");
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
        if (!out_) throw OutputError("failed writing '" + path_.string() + "'");
    }

    void flush() { out_.flush(); }

private:
    fs::path path_;
    std::ofstream out_;
};

[[nodiscard]] inline std::string fmt(double v) { return format_double(v); }

[[nodiscard]] inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Provenance record written before any rollout and finalized once.
class RunManifest {
public:
    RunManifest(fs::path out_dir, std::string command, const ExperimentConfig& cfg, std::string setup = {})
        : dir_(std::move(out_dir)), file_(manifest_name(command, setup)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw OutputError("cannot create output directory '" + dir_.string() + "': " + ec.message());
        doc_["command"] = std::move(command);
        doc_["setup"] = std::move(setup);
        doc_["code_version"] = CPGLOCO_VERSION;
        doc_["seed"] = cfg.seed;
        doc_["preset"] = to_string(cfg.preset);
        doc_["config"] = cfg.source.to_string();
        doc_["started_at"] = utc_now();
        doc_["status"] = "running";
        doc_["artifacts"] = nlohmann::json::array();
        write();
    }

    [[nodiscard]] fs::path path_for(const std::string& name) {
        doc_["artifacts"].push_back(name);
        return dir_ / name;
    }

    void complete() {
        if (done_) return;
        doc_["status"] = "complete";
        doc_["finished_at"] = utc_now();
        write();
        done_ = true;
    }

    [[nodiscard]] const fs::path& dir() const noexcept { return dir_; }
    [[nodiscard]] fs::path path() const { return dir_ / file_; }

    /// manifest_<command>[_<setup>].json; one per command and setup, so runs
    /// sharing an output directory keep separate records.
    [[nodiscard]] static std::string manifest_name(const std::string& command, const std::string& setup) {
        return "manifest_" + command + (setup.empty() ? "" : "_" + setup) + ".json";
    }

private:
    void write() const {
        std::ofstream out(path());
        if (!out) throw OutputError("cannot write manifest in '" + dir_.string() + "'");
        out << doc_.dump(2) << '\n';
    }

    fs::path dir_;
    std::string file_;
    nlohmann::json doc_;
    bool done_ = false;
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Runs the GA; writes ga_generations.csv and best_network.cfg.
inline GaResult cmd_optimize(const ExperimentConfig& cfg, const fs::path& out_dir) {
    RunManifest manifest(out_dir, "optimize", cfg);
    CsvWriter csv(manifest.path_for("ga_generations.csv"),
                  {"generation", "best", "mean", "std", "kappa", "g1", "g2", "g3", "g4", "g5", "g6", "b1", "b2", "b3",
                   "b4", "k"});
    const GaResult result = optimize(cfg.ga, cfg.network, cfg.plant, cfg.seed, [&](const GenerationStats& s) {
        std::vector<std::string> row = {std::to_string(s.generation), fmt(s.best), fmt(s.mean), fmt(s.stddev)};
        for (double g : s.best_chromosome) row.push_back(fmt(g));
        csv.row(row);
    });
    csv.flush();

    CpgNetworkConfig best = cfg.network;
    apply(best, to_gait(result.best));
    KeyValueFile kv;
    write_network_config(kv, best);
    const fs::path net_path = manifest.path_for("best_network.cfg");
    std::ofstream net(net_path);
    if (!net) throw OutputError("cannot write '" + net_path.string() + "'");
    net << "# best chromosome, fitness " << fmt(result.best_fitness) << "\n" << kv.to_string();
    net.close();
    manifest.complete();
    return result;
}

struct EvalRow {
    std::size_t episode = 0;
    double reward = 0.0;
    EpisodeMetrics metrics;
};

struct TrainResult {
    Agent agent;
    std::vector<EvalRow> evals;
};

[[nodiscard]] inline const SetupSpec& require_setup(const ExperimentConfig& cfg, const std::string& name) {
    const SetupSpec* s = cfg.find_setup(name);
    if (!s) throw ConfigError("unknown training setup '" + name + "'; valid setups: " + [&] {
        std::string n;
        for (const auto& x : cfg.setups) n += (n.empty() ? "" : ", ") + x.name;
        return n;
    }());
    return *s;
}

/// DDPG training loop. Evaluation episodes run without noise and without
/// updates. `on_eval` sees each evaluation as it happens.
[[nodiscard]] inline TrainResult train_agent(const ExperimentConfig& cfg, const SetupSpec& setup,
                                             const std::function<void(const EvalRow&)>& on_eval = {},
                                             const std::function<void(std::size_t, const Agent&)>& on_checkpoint = {}) {
    const auto& d = cfg.ddpg;
    std::mt19937_64 rng(cfg.seed);
    TrainResult result{Agent::create(rng), {}};
    Agent& agent = result.agent;
    ReplayBuffer buffer(d.buffer_capacity);
    OuNoise noise(d.ou_theta, d.ou_sigma);
    LocomotionEnv env(cfg.network, cfg.plant, setup.weights.xi);

    for (std::size_t ep = 1; ep <= d.episodes; ++ep) {
        env.reset(train_plant_seed(cfg.seed, ep));
        noise.reset();
        const auto res = run_episode(
            env,
            [&](const StateVector& s) {
                Phi a = agent.act(s);
                const Phi n = noise.sample(rng);
                return Phi{a[0] + n[0], a[1] + n[1]};
            },
            setup.weights, d.episode_length, d.action_period,
            [&](const Transition& t) {
                buffer.push(t);
                if (buffer.size() >= d.batch) train_step(agent, buffer, d, rng);
            });
        log::debug("episode ", ep, " return ", res.episode_return);

        if (ep % d.eval_every == 0) {
            const auto ev = rollout(cfg, NeuralPolicy{agent.actor, setup.weights.xi},
                                    eval_plant_seed(cfg.seed, ep / d.eval_every), setup.weights);
            EvalRow row{ep, ev.episode_return, ev.metrics};
            log::info(setup.name, " eval after episode ", ep, ": reward ", row.reward, " d_x ", row.metrics.d_x,
                      " d_y ", row.metrics.d_y);
            result.evals.push_back(row);
            if (on_eval) on_eval(row);
        }
        if (on_checkpoint && d.checkpoint_every > 0 && ep % d.checkpoint_every == 0) on_checkpoint(ep, agent);
    }
    return result;
}

[[nodiscard]] inline fs::path default_checkpoint(const fs::path& out_dir, const std::string& setup) {
    return out_dir / "checkpoints" / setup / "actor.bin";
}

inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& setup_name, const fs::path& out_dir) {
    const SetupSpec& setup = require_setup(cfg, setup_name);
    RunManifest manifest(out_dir, "train", cfg, setup_name);
    CsvWriter csv(manifest.path_for("train_" + setup_name + ".csv"),
                  {"episode", "eval_reward", "d_x", "d_y", "gamma", "fell"});
    const fs::path ckpt_dir = out_dir / "checkpoints" / setup_name;
    fs::create_directories(ckpt_dir);
    auto result = train_agent(
        cfg, setup,
        [&](const EvalRow& r) {
            csv.row({std::to_string(r.episode), fmt(r.reward), fmt(r.metrics.d_x), fmt(r.metrics.d_y),
                     fmt(r.metrics.gamma_final), r.metrics.fell ? "1" : "0"});
        },
        [&](std::size_t ep, const Agent& a) {
            char name[32];
            std::snprintf(name, sizeof name, "actor_ep%05zu.bin", ep);
            save_checkpoint((ckpt_dir / name).string(), a.actor);
            (void)manifest.path_for("checkpoints/" + setup_name + "/" + name);
        });
    csv.flush();
    save_checkpoint(manifest.path_for("checkpoints/" + setup_name + "/actor.bin").string(), result.agent.actor);
    save_checkpoint(manifest.path_for("checkpoints/" + setup_name + "/critic.bin").string(), result.agent.critic);
    manifest.complete();
    return result;
}

[[nodiscard]] inline fs::path checkpoint_path(const ExperimentConfig& cfg, const std::string& setup,
                                              const fs::path& out_dir) {
    const auto it = cfg.checkpoints.find(setup);
    return it != cfg.checkpoints.end() ? fs::path(it->second) : default_checkpoint(out_dir, setup);
}

/// Pins the checkpoint a neural setup reads, so the run's manifest names it
/// and can be repeated from another output directory.
[[nodiscard]] inline ExperimentConfig with_pinned_checkpoint(ExperimentConfig cfg, const std::string& name,
                                                             const fs::path& out_dir) {
    if (!cfg.find_setup(name)) return cfg;
    const fs::path path = fs::absolute(checkpoint_path(cfg, name, out_dir)).lexically_normal();
    cfg.checkpoints[name] = path.string();
    cfg.source.set("checkpoint." + name, path.string());
    return cfg;
}

/// Resolves S0, L<n> or a trained setup into a controller. Neural setups
/// load their actor checkpoint.
[[nodiscard]] inline Controller resolve_controller(const ExperimentConfig& cfg, const std::string& name,
                                                   const fs::path& out_dir) {
    if (name == "S0") return Unmodulated{};
    if (const auto* l = cfg.find_linear(name)) return LinearPolicy{l->controller};
    if (const auto* s = cfg.find_setup(name)) {
        const fs::path path = checkpoint_path(cfg, name, out_dir);
        if (!fs::exists(path))
            throw MissingInput("setup " + name + " needs a trained actor; expected checkpoint at '" + path.string() +
                               "'");
        return NeuralPolicy{load_checkpoint(path.string()), s->weights.xi};
    }
    throw ConfigError("unknown setup '" + name + "'; valid names: " + cfg.setup_names());
}

struct TestEpisode {
    std::size_t episode = 0;
    std::uint64_t plant_seed = 0;
    EpisodeMetrics metrics;
};

/// Noise-free test episodes, run concurrently; results are ordered by
/// episode index.
[[nodiscard]] inline std::vector<TestEpisode> run_test_episodes(const ExperimentConfig& cfg,
                                                                const Controller& controller, std::size_t episodes) {
    std::vector<TestEpisode> out(episodes);
    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, episodes);
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t i = w; i < episodes; i += threads) {
                const auto seed = test_plant_seed(cfg.seed, i);
                out[i] = {i, seed, rollout(cfg, controller, seed, RewardWeights{}).metrics};
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Quantile with linear interpolation between order statistics.
[[nodiscard]] inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

[[nodiscard]] inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct TestSummary {
    double median_d_x = 0.0, median_abs_d_y = 0.0, median_abs_gamma = 0.0;
    std::size_t falls = 0;
};

[[nodiscard]] inline TestSummary summarize(const std::vector<TestEpisode>& eps) {
    std::vector<double> dx, dy, g;
    TestSummary s;
    for (const auto& e : eps) {
        dx.push_back(e.metrics.d_x);
        dy.push_back(std::abs(e.metrics.d_y));
        g.push_back(std::abs(e.metrics.gamma_final));
        s.falls += e.metrics.fell ? 1 : 0;
    }
    s.median_d_x = median(dx);
    s.median_abs_d_y = median(dy);
    s.median_abs_gamma = median(g);
    return s;
}

inline std::vector<TestEpisode> cmd_test(const ExperimentConfig& base, const std::string& name,
                                         const fs::path& out_dir) {
    const ExperimentConfig cfg = with_pinned_checkpoint(base, name, out_dir);
    const Controller controller = resolve_controller(cfg, name, out_dir);
    RunManifest manifest(out_dir, "test", cfg, name);
    const NetworkParams* actor = std::holds_alternative<NeuralPolicy>(controller)
                                     ? &std::get<NeuralPolicy>(controller).actor
                                     : nullptr;
    const std::uint64_t before = actor ? params_checksum(*actor) : 0;
    const auto episodes = run_test_episodes(cfg, controller, cfg.test_episodes);
    if (actor && params_checksum(*actor) != before)
        throw std::logic_error("controller parameters changed during testing");

    CsvWriter csv(manifest.path_for("test_" + name + ".csv"),
                  {"episode", "plant_seed", "d_x", "d_y", "gamma", "t_up", "fell"});
    std::vector<double> dx, dy, g;
    std::size_t falls = 0;
    for (const auto& e : episodes) {
        csv.row({std::to_string(e.episode), std::to_string(e.plant_seed), fmt(e.metrics.d_x), fmt(e.metrics.d_y),
                 fmt(e.metrics.gamma_final), fmt(e.metrics.t_up), e.metrics.fell ? "1" : "0"});
        dx.push_back(e.metrics.d_x);
        dy.push_back(std::abs(e.metrics.d_y));
        g.push_back(e.metrics.gamma_final);
        falls += e.metrics.fell ? 1 : 0;
    }
    csv.flush();
    CsvWriter summary(manifest.path_for("test_" + name + "_summary.csv"), {"metric", "q1", "median", "q3"});
    auto quartiles = [&](const std::string& m, const std::vector<double>& v) {
        summary.row({m, fmt(quantile(v, 0.25)), fmt(quantile(v, 0.5)), fmt(quantile(v, 0.75))});
    };
    quartiles("d_x", dx);
    quartiles("abs_d_y", dy);
    quartiles("gamma", g);
    summary.row({"falls", std::to_string(falls), std::to_string(falls), std::to_string(falls)});
    summary.flush();
    manifest.complete();
    return episodes;
}

/// Per-tick JSON object: time, torso state, joint targets and hip gains.
[[nodiscard]] inline nlohmann::json trace_line(const TickSample& s) {
    const auto& o = s.torso;
    nlohmann::json j;
    j["t"] = s.t;
    j["torso"] = {{"alpha", o.alpha}, {"beta", o.beta},       {"gamma", o.gamma}, {"alpha_dot", o.alpha_dot},
                  {"beta_dot", o.beta_dot}, {"gamma_dot", o.gamma_dot}, {"x", o.x},  {"y", o.y},
                  {"z", o.z}, {"x_dot", o.x_dot}, {"y_dot", o.y_dot}, {"z_dot", o.z_dot}};
    nlohmann::json cmds = nlohmann::json::object();
    for (const auto& c : s.commands) cmds[std::string(kJointNames[index(c.joint)])] = c.theta;
    j["commands"] = cmds;
    j["psi_l"] = s.psi.psi_l;
    j["psi_r"] = s.psi.psi_r;
    return j;
}

/// Single episode at full tick rate, one JSON object per line. Returns the
/// number of ticks written.
inline std::size_t cmd_trace(const ExperimentConfig& base, const std::string& name, const fs::path& out_dir) {
    const ExperimentConfig cfg = with_pinned_checkpoint(base, name, out_dir);
    const Controller controller = resolve_controller(cfg, name, out_dir);
    RunManifest manifest(out_dir, "trace", cfg, name);
    const fs::path path = manifest.path_for("trace_" + name + ".jsonl");
    std::ofstream out(path);
    if (!out) throw OutputError("cannot write '" + path.string() + "'");
    std::size_t ticks = 0;
    (void)rollout(cfg, controller, test_plant_seed(cfg.seed, 0), RewardWeights{}, [&](const TickSample& s) {
        out << trace_line(s).dump() << '\n';
        ++ticks;
    });
    if (!out) throw OutputError("failed writing '" + path.string() + "'");
    out.close();
    manifest.complete();
    return ticks;
}

}  // namespace cpgloco
