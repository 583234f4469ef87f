#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "cpgloco/ga.hpp"

using namespace cpgloco;

namespace {

Chromosome counting(double offset) {
    Chromosome c{};
    for (std::size_t i = 0; i < kNumGenes; ++i) c[i] = offset + static_cast<double>(i);
    return c;
}

GaConfig small_ga() {
    GaConfig c;
    c.population = 8;
    c.generations = 3;
    c.horizon = 5.0;
    c.threads = 1;
    return c;
}

}  // namespace

TEST(Fitness, Arithmetic) {
    EXPECT_EQ(fitness_value(4.0, 20.0), 14.0);
    EXPECT_DOUBLE_EQ(fitness_value(0.4, 3.0), 1.9);
}

TEST(Fitness, BestReportedGaitBeatsRandomMedian) {
    const auto best = to_chromosome(GaitParameters{});
    ASSERT_TRUE(in_bounds(best));
    const PlantConfig plant;
    const double f_best = fitness(best, default_topology(), plant, 7);
    std::mt19937_64 rng(123);
    std::vector<double> random;
    for (int i = 0; i < 50; ++i) random.push_back(fitness(random_chromosome(rng), default_topology(), plant, 7));
    std::nth_element(random.begin(), random.begin() + 25, random.end());
    EXPECT_GT(f_best, random[25]);
    // The reported gait walks the whole horizon.
    EXPECT_GT(f_best, 0.5 * 20.0);
}

TEST(Fitness, DeterministicForFixedPlantSeed) {
    std::mt19937_64 rng(5);
    const auto c = random_chromosome(rng);
    EXPECT_EQ(fitness(c, default_topology(), PlantConfig{}, 3, 5.0), fitness(c, default_topology(), PlantConfig{}, 3, 5.0));
}

TEST(Fitness, RejectsOutOfBounds) {
    auto c = to_chromosome(GaitParameters{});
    c[0] = 1.5;
    EXPECT_THROW((void)fitness(c, default_topology(), PlantConfig{}, 1), std::invalid_argument);
}

TEST(Chromosome, RoundTripThroughGaitParameters) {
    std::mt19937_64 rng(6);
    const auto c = random_chromosome(rng);
    EXPECT_EQ(to_chromosome(to_gait(c)), c);
    const auto g = to_gait(to_chromosome(GaitParameters{}));
    EXPECT_EQ(g.kappa, 0.3178);
    EXPECT_EQ(g.feedback_weight, 1.5364);
    EXPECT_EQ(g.gains[0], 0.3777);
    EXPECT_EQ(g.biases[3], 0.4814);
}

TEST(Crossover, WithItselfIsUnchanged) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const auto c = random_chromosome(rng);
        auto a = c, b = c;
        two_point_crossover(a, b, rng);
        EXPECT_EQ(a, c);
        EXPECT_EQ(b, c);
    }
}

TEST(Crossover, HandComputedSegmentSwap) {
    auto a = counting(0.0);
    auto b = counting(100.0);
    two_point_crossover(a, b, 3, 7);
    const Chromosome ea = {0, 1, 2, 103, 104, 105, 106, 7, 8, 9, 10, 11};
    const Chromosome eb = {100, 101, 102, 3, 4, 5, 6, 107, 108, 109, 110, 111};
    EXPECT_EQ(a, ea);
    EXPECT_EQ(b, eb);
    EXPECT_THROW(two_point_crossover(a, b, 7, 3), std::invalid_argument);
    EXPECT_THROW(two_point_crossover(a, b, 3, 13), std::invalid_argument);
}

TEST(Crossover, PreservesGeneMultiset) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        const auto pa = random_chromosome(rng), pb = random_chromosome(rng);
        auto a = pa, b = pb;
        two_point_crossover(a, b, rng);
        for (std::size_t g = 0; g < kNumGenes; ++g) {
            const bool kept = a[g] == pa[g] && b[g] == pb[g];
            const bool swapped = a[g] == pb[g] && b[g] == pa[g];
            EXPECT_TRUE(kept || swapped);
        }
    }
}

TEST(Mutation, ZeroProbabilityIsIdentity) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
        const auto c = random_chromosome(rng);
        auto m = c;
        gaussian_mutate(m, 0.0, 1.0, rng);
        EXPECT_EQ(m, c);
    }
}

TEST(Mutation, ClampsToBounds) {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 500; ++i) {
        auto c = random_chromosome(rng);
        gaussian_mutate(c, 1.0, 4.0, rng);
        EXPECT_TRUE(in_bounds(c));
    }
}

TEST(Mutation, StepSizeMatchesVariance) {
    std::mt19937_64 rng(11);
    double ss = 0;
    int n = 0;
    for (int i = 0; i < 2000; ++i) {
        Chromosome c{};
        for (std::size_t g = 0; g < kNumGenes; ++g) c[g] = (kGeneBounds[g].lo + kGeneBounds[g].hi) / 2;
        const auto before = c;
        gaussian_mutate(c, 1.0, 1e-4, rng);
        for (std::size_t g = 0; g < kNumGenes; ++g) {
            ss += (c[g] - before[g]) * (c[g] - before[g]);
            ++n;
        }
    }
    EXPECT_NEAR(ss / n, 1e-4, 1e-5);
}

TEST(Selection, TournamentWinnersBeatPopulationMean) {
    std::mt19937_64 rng(12);
    std::vector<double> fit(40);
    std::uniform_real_distribution<double> u(0, 10);
    for (auto& f : fit) f = u(rng);
    const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / 40;
    double winners = 0;
    for (int i = 0; i < 20000; ++i) winners += fit[tournament_select(fit, 3, rng)];
    winners /= 20000;
    EXPECT_GT(winners, mean + 1.0);
    // Size one is uniform.
    double uniform = 0;
    for (int i = 0; i < 20000; ++i) uniform += fit[tournament_select(fit, 1, rng)];
    EXPECT_NEAR(uniform / 20000, mean, 0.2);
}

TEST(Evolve, OffspringInBoundsAndSizeInvariant) {
    GaConfig cfg;
    cfg.population = 20;
    cfg.mutation_chromosome_probability = 1.0;
    cfg.mutation_gene_probability = 0.5;
    cfg.mutation_variance = 1.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<Chromosome> pop(cfg.population);
        for (auto& c : pop) c = random_chromosome(rng);
        std::vector<double> fit(pop.size());
        for (auto& f : fit) f = std::uniform_real_distribution<double>(0, 1)(rng);
        for (int gen = 0; gen < 5; ++gen) {
            pop = evolve(pop, fit, cfg, rng);
            ASSERT_EQ(pop.size(), cfg.population);
            for (const auto& c : pop) EXPECT_TRUE(in_bounds(c));
        }
    }
}

TEST(Evolve, EliteCopiedUnchanged) {
    GaConfig cfg;
    cfg.population = 10;
    cfg.mutation_chromosome_probability = 1.0;
    cfg.mutation_gene_probability = 1.0;
    std::mt19937_64 rng(13);
    std::vector<Chromosome> pop(cfg.population);
    for (auto& c : pop) c = random_chromosome(rng);
    std::vector<double> fit = {1, 2, 9, 3, 4, 5, 6, 7, 8, 0};
    const auto next = evolve(pop, fit, cfg, rng);
    EXPECT_EQ(next[0], pop[2]);
    EXPECT_THROW((void)evolve(pop, std::vector<double>(3), cfg, rng), std::invalid_argument);
}

TEST(Evolve, DeterministicPerSeed) {
    GaConfig cfg;
    cfg.population = 12;
    std::mt19937_64 init(14);
    std::vector<Chromosome> pop(cfg.population);
    for (auto& c : pop) c = random_chromosome(init);
    std::vector<double> fit(pop.size());
    std::iota(fit.begin(), fit.end(), 0.0);
    std::mt19937_64 r1(15), r2(15);
    EXPECT_EQ(evolve(pop, fit, cfg, r1), evolve(pop, fit, cfg, r2));
}

TEST(Optimize, BestFitnessNonDecreasingWithElitism) {
    const auto r = optimize(small_ga(), default_topology(), PlantConfig{}, 3);
    ASSERT_EQ(r.history.size(), 4u);
    for (std::size_t g = 1; g < r.history.size(); ++g) EXPECT_GE(r.history[g].best, r.history[g - 1].best);
    EXPECT_EQ(r.best_fitness, r.history.back().best);
    EXPECT_EQ(fitness(r.best, default_topology(), PlantConfig{}, small_ga().plant_seed, small_ga().horizon),
              r.best_fitness);
    for (const auto& h : r.history) {
        EXPECT_GE(h.best, h.mean);
        EXPECT_GE(h.stddev, 0.0);
    }
}

TEST(Optimize, ThreadCountDoesNotChangeResult) {
    auto cfg = small_ga();
    cfg.generations = 1;
    const auto one = optimize(cfg, default_topology(), PlantConfig{}, 4);
    cfg.threads = 3;
    const auto three = optimize(cfg, default_topology(), PlantConfig{}, 4);
    EXPECT_EQ(one.best, three.best);
    for (std::size_t g = 0; g < one.history.size(); ++g) EXPECT_EQ(one.history[g].mean, three.history[g].mean);
}

TEST(Config, Validation) {
    EXPECT_NO_THROW(GaConfig{}.validate());
    GaConfig c;
    c.population = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.population = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.crossover_probability = 1.2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.mutation_variance = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Population, ParallelEvaluationKeepsOrder) {
    std::vector<Chromosome> pop(17);
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i] = counting(static_cast<double>(i));
    const auto out = evaluate_population(pop, [](const Chromosome& c) { return c[0] * 2; }, 4);
    for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_EQ(out[i], 2.0 * static_cast<double>(i));
    EXPECT_THROW((void)evaluate_population(pop, [](const Chromosome&) -> double { throw std::runtime_error("x"); }, 2),
                 std::runtime_error);
}
