// cpgloco: command-line front end for GA optimization, controller training,
// testing and tracing.
//
// Exit codes:
//   0 success
//   1 internal error
//   2 usage error
//   3 invalid configuration
//   4 missing input (config file, network file, checkpoint)
//   5 numerical divergence
//   6 output could not be written
//   7 checkpoint unreadable

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cpgloco/harness.hpp"

namespace {

enum Exit : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kConfig = 3,
    kMissing = 4,
    kNumerical = 5,
    kOutput = 6,
    kCheckpoint = 7,
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
    std::string setup;
    std::string out = "runs";
};

cpgloco::ExperimentConfig load(const Options& o) {
    if (o.config.empty()) return cpgloco::load_experiment(cpgloco::KeyValueFile{}, o.preset, o.seed);
    return cpgloco::load_experiment_file(o.config, o.preset, o.seed);
}

int fail(int code, const std::string& category, const std::string& message) {
    std::cerr << "cpgloco: " << category << ": " << message << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPG locomotion: GA gait optimization, DDPG hip modulation, evaluation"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key = value experiment config");
        sub->add_option("--seed", o.seed, "run seed (overrides config)");
        sub->add_option("--preset", o.preset, "desk or paper (overrides config)")
            ->check(CLI::IsMember({"desk", "paper"}));
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
    };

    auto* optimize = app.add_subcommand("optimize", "run the GA and write the best network config");
    auto* train = app.add_subcommand("train", "train a DDPG controller for one setup");
    auto* test = app.add_subcommand("test", "run noise-free test episodes for a setup (S0, L1, L2, S1..S4)");
    auto* trace = app.add_subcommand("trace", "write a per-tick JSON-lines trace of one episode");
    auto* validate = app.add_subcommand("validate-config", "load and check a config, then print it");
    for (auto* s : {optimize, train, test, trace, validate}) add_common(s);
    for (auto* s : {train, test, trace}) s->add_option("--setup", o.setup, "setup name")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        const auto cfg = load(o);
        const std::filesystem::path out = o.out;
        if (*validate) {
            std::cout << cfg.source.to_string();
            std::cout << "# setups: " << cfg.setup_names() << '\n';
        } else if (*optimize) {
            const auto r = cpgloco::cmd_optimize(cfg, out);
            std::cout << "best fitness " << cpgloco::format_double(r.best_fitness) << " (generation 0 best "
                      << cpgloco::format_double(r.history.front().best) << ")\n";
        } else if (*train) {
            const auto r = cpgloco::cmd_train(cfg, o.setup, out);
            if (!r.evals.empty())
                std::cout << "final eval reward " << cpgloco::format_double(r.evals.back().reward) << '\n';
        } else if (*test) {
            const auto eps = cpgloco::cmd_test(cfg, o.setup, out);
            const auto s = cpgloco::summarize(eps);
            std::cout << o.setup << ": median d_x " << cpgloco::format_double(s.median_d_x) << ", median |d_y| "
                      << cpgloco::format_double(s.median_abs_d_y) << ", falls " << s.falls << '\n';
        } else if (*trace) {
            const auto n = cpgloco::cmd_trace(cfg, o.setup, out);
            std::cout << n << " ticks\n";
        }
        return kOk;
    } catch (const cpgloco::MissingInput& e) {
        return fail(kMissing, "missing input", e.what());
    } catch (const cpgloco::CheckpointError& e) {
        return fail(kCheckpoint, "checkpoint", e.what());
    } catch (const cpgloco::ConfigError& e) {
        return fail(kConfig, "config", e.what());
    } catch (const cpgloco::NumericalDivergence& e) {
        return fail(kNumerical, "numerical", e.what());
    } catch (const cpgloco::OutputError& e) {
        return fail(kOutput, "output", e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(kOutput, "output", e.what());
    } catch (const std::exception& e) {
        return fail(kInternal, "internal", e.what());
    }
}
