#pragma once

// Real-coded genetic algorithm over the 12-gene CPG chromosome
// [kappa, g1..g6, b1..b4, k].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cpgloco/env.hpp"
#include "cpgloco/log.hpp"

namespace cpgloco {

inline constexpr std::size_t kNumGenes = 12;

using Chromosome = std::array<double, kNumGenes>;

struct GeneBounds {
    double lo, hi;
};

inline constexpr std::array<GeneBounds, kNumGenes> kGeneBounds = {{
    {0.2, 1.0},                                                            // kappa
    {0.01, 1.0}, {0.01, 1.0}, {0.01, 1.0}, {0.01, 1.0}, {0.01, 1.0}, {0.01, 1.0},  // g1..g6
    {-0.06, 0.0}, {0.0, 0.5}, {-0.5, 0.0}, {0.0, 1.0},                     // b1..b4
    {-2.5, 2.5},                                                           // k
}};

[[nodiscard]] inline bool in_bounds(const Chromosome& c) {
    for (std::size_t i = 0; i < kNumGenes; ++i)
        if (!(c[i] >= kGeneBounds[i].lo && c[i] <= kGeneBounds[i].hi)) return false;
    return true;
}

inline void clamp_to_bounds(Chromosome& c) {
    for (std::size_t i = 0; i < kNumGenes; ++i) c[i] = std::clamp(c[i], kGeneBounds[i].lo, kGeneBounds[i].hi);
}

[[nodiscard]] inline GaitParameters to_gait(const Chromosome& c) {
    GaitParameters g;
    g.kappa = c[0];
    std::copy_n(c.begin() + 1, kNumGains, g.gains.begin());
    std::copy_n(c.begin() + 1 + kNumGains, kNumBiases, g.biases.begin());
    g.feedback_weight = c[11];
    return g;
}

[[nodiscard]] inline Chromosome to_chromosome(const GaitParameters& g) {
    Chromosome c{};
    c[0] = g.kappa;
    std::copy(g.gains.begin(), g.gains.end(), c.begin() + 1);
    std::copy(g.biases.begin(), g.biases.end(), c.begin() + 1 + kNumGains);
    c[11] = g.feedback_weight;
    return c;
}

template <typename Rng>
[[nodiscard]] Chromosome random_chromosome(Rng& rng) {
    Chromosome c{};
    for (std::size_t i = 0; i < kNumGenes; ++i)
        c[i] = std::uniform_real_distribution<double>(kGeneBounds[i].lo, kGeneBounds[i].hi)(rng);
    return c;
}

struct GaConfig {
    std::size_t population = 200;
    std::size_t generations = 30;
    std::size_t tournament_size = 3;
    double crossover_probability = 0.8;
    double mutation_chromosome_probability = 0.10;
    double mutation_gene_probability = 0.05;
    double mutation_variance = 1e-4;
    double horizon = 20.0;  // s
    std::size_t elitism = 1;
    std::uint64_t plant_seed = 7;
    std::size_t threads = 0;  // 0: hardware concurrency

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (population == 0) throw ConfigError("ga: population must be positive");
        if (population % 2 != 0) throw ConfigError("ga: population must be even");
        if (tournament_size == 0) throw ConfigError("ga: tournament size must be positive");
        if (!prob(crossover_probability) || !prob(mutation_chromosome_probability) ||
            !prob(mutation_gene_probability))
            throw ConfigError("ga: probabilities must lie in [0, 1]");
        if (!(mutation_variance >= 0.0)) throw ConfigError("ga: mutation variance must be >= 0");
        if (!(horizon > 0.0)) throw ConfigError("ga: horizon must be positive");
        if (elitism > population) throw ConfigError("ga: elitism exceeds population");
    }
};

[[nodiscard]] inline double fitness_value(double d_x, double t_up) { return d_x + 0.5 * t_up; }

/// Rolls out the network built from `c` with unmodulated hips. A numerical
/// divergence ends the rollout; the partial result is scored.
[[nodiscard]] inline double fitness(const Chromosome& c, const CpgNetworkConfig& base, const PlantConfig& plant,
                                    std::uint64_t plant_seed, double horizon = 20.0) {
    if (!in_bounds(c)) throw std::invalid_argument("chromosome out of bounds");
    CpgNetworkConfig cfg = base;
    apply(cfg, to_gait(c));
    WalkingEnv env(cfg, plant);
    env.reset(plant_seed);
    try {
        env.advance({1.0, 1.0}, horizon);
    } catch (const NumericalDivergence& e) {
        log::debug("fitness rollout diverged: ", e.what());
    }
    const auto m = env.metrics();
    return fitness_value(m.d_x, m.t_up);
}

template <typename Rng>
[[nodiscard]] std::size_t tournament_select(const std::vector<double>& fit, std::size_t size, Rng& rng) {
    if (fit.empty()) throw std::invalid_argument("empty population");
    std::uniform_int_distribution<std::size_t> pick(0, fit.size() - 1);
    std::size_t best = pick(rng);
    for (std::size_t i = 1; i < size; ++i) {
        const std::size_t j = pick(rng);
        if (fit[j] > fit[best]) best = j;
    }
    return best;
}

/// Swaps genes in [lo, hi) between the two parents.
inline void two_point_crossover(Chromosome& a, Chromosome& b, std::size_t lo, std::size_t hi) {
    if (lo > hi || hi > kNumGenes) throw std::invalid_argument("invalid crossover points");
    for (std::size_t i = lo; i < hi; ++i) std::swap(a[i], b[i]);
}

template <typename Rng>
void two_point_crossover(Chromosome& a, Chromosome& b, Rng& rng) {
    std::uniform_int_distribution<std::size_t> cut(0, kNumGenes);
    std::size_t p = cut(rng), q = cut(rng);
    if (p > q) std::swap(p, q);
    two_point_crossover(a, b, p, q);
}

template <typename Rng>
void gaussian_mutate(Chromosome& c, double gene_probability, double variance, Rng& rng) {
    std::bernoulli_distribution flip(gene_probability);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (double& g : c)
        if (flip(rng)) g += noise(rng);
    clamp_to_bounds(c);
}

/// Next generation from a scored population.
template <typename Rng>
[[nodiscard]] std::vector<Chromosome> evolve(const std::vector<Chromosome>& pop, const std::vector<double>& fit,
                                             const GaConfig& cfg, Rng& rng) {
    if (pop.size() != fit.size()) throw std::invalid_argument("population and fitness sizes differ");
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return fit[i] > fit[j]; });

    std::vector<Chromosome> next;
    next.reserve(pop.size());
    for (std::size_t e = 0; e < cfg.elitism; ++e) next.push_back(pop[order[e]]);

    std::bernoulli_distribution do_cross(cfg.crossover_probability);
    std::bernoulli_distribution do_mutate(cfg.mutation_chromosome_probability);
    while (next.size() < pop.size()) {
        Chromosome a = pop[tournament_select(fit, cfg.tournament_size, rng)];
        Chromosome b = pop[tournament_select(fit, cfg.tournament_size, rng)];
        if (do_cross(rng)) two_point_crossover(a, b, rng);
        for (Chromosome* child : {&a, &b}) {
            if (do_mutate(rng)) gaussian_mutate(*child, cfg.mutation_gene_probability, cfg.mutation_variance, rng);
            if (next.size() < pop.size()) next.push_back(*child);
        }
    }
    return next;
}

/// Evaluates every chromosome, splitting the population across threads.
[[nodiscard]] inline std::vector<double> evaluate_population(const std::vector<Chromosome>& pop,
                                                             const std::function<double(const Chromosome&)>& f,
                                                             std::size_t threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, pop.size());
    std::vector<double> out(pop.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < pop.size(); ++i) out[i] = f(pop[i]);
        return out;
    }
    std::vector<std::jthread> workers;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w)
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < pop.size(); i += threads) out[i] = f(pop[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    workers.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct GenerationStats {
    std::size_t generation = 0;
    double best = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    Chromosome best_chromosome{};
};

[[nodiscard]] inline GenerationStats summarize(std::size_t generation, const std::vector<Chromosome>& pop,
                                               const std::vector<double>& fit) {
    GenerationStats s;
    s.generation = generation;
    const auto best = std::max_element(fit.begin(), fit.end()) - fit.begin();
    s.best = fit[best];
    s.best_chromosome = pop[best];
    s.mean = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(fit.size());
    double var = 0.0;
    for (double f : fit) var += (f - s.mean) * (f - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(fit.size()));
    return s;
}

struct GaResult {
    std::vector<GenerationStats> history;  // generation 0 is the random initial population
    Chromosome best{};
    double best_fitness = 0.0;
};

/// Full optimization run. Fitness uses a fixed plant seed, so it is
/// deterministic and the elite's score carries over between generations.
[[nodiscard]] inline GaResult optimize(const GaConfig& cfg, const CpgNetworkConfig& base, const PlantConfig& plant,
                                       std::uint64_t seed,
                                       const std::function<void(const GenerationStats&)>& on_generation = {}) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::vector<Chromosome> pop(cfg.population);
    for (auto& c : pop) c = random_chromosome(rng);
    auto f = [&](const Chromosome& c) { return fitness(c, base, plant, cfg.plant_seed, cfg.horizon); };

    GaResult result;
    std::vector<double> fit = evaluate_population(pop, f, cfg.threads);
    for (std::size_t gen = 0;; ++gen) {
        auto stats = summarize(gen, pop, fit);
        log::info("generation ", gen, " best ", stats.best, " mean ", stats.mean);
        if (on_generation) on_generation(stats);
        result.history.push_back(stats);
        if (gen == cfg.generations) break;
        pop = evolve(pop, fit, cfg, rng);
        fit = evaluate_population(pop, f, cfg.threads);
    }
    result.best = result.history.back().best_chromosome;
    result.best_fitness = result.history.back().best;
    return result;
}

}  // namespace cpgloco
