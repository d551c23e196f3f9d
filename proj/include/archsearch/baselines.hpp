#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "archsearch/evaluator.hpp"
#include "archsearch/rng.hpp"
#include "archsearch/session.hpp"
#include "archsearch/space.hpp"

namespace archsearch {

// Shared knobs for the reference algorithms. Budgets count unique evaluated
// architectures, exactly like the MCTS session, so comparisons are fair.
struct BaselineConfig {
    std::uint64_t seed = 0;
    std::uint64_t budget = 100;
    std::optional<double> target_accuracy;
    double target_tolerance = 0.0;
    int max_tree_depth = 0;  // rollout depth valve; 0 = domain default

    // regularized evolution
    int population_size = 500;
    int tournament_size = 50;

    // tabular Q-learning
    double epsilon = 0.2;  // exploration rate
    double alpha = 0.2;    // learning rate
    double gamma = 1.0;    // discount; terminal-only rewards make it moot
    double q_init = 0.5;

    // hill climbing
    bool restart_on_revisit = true;

    TransferCostModel cost;  // baselines always pay the full training cost
};

// The common per-trial record: the same trace events the MCTS session emits,
// so the harness treats every algorithm identically.
struct BaselineResult {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::vector<TraceEvent> events;
    double best_accuracy = 0.0;
    std::optional<EncodedArch> best_encoding;
    CostLedger ledger;
    std::optional<std::int64_t> samples_to_target;
};

// Uniform-random rollouts from the root (the engine's simulation rule,
// Terminate included) until the budget of unique evaluations is spent.
BaselineResult random_search(const SpaceLimits& limits,
                             const Evaluator& evaluator,
                             const BaselineConfig& cfg);

/// Aging evolution: warm a population with random architectures, then
// repeatedly mutate the best of a random tournament, append the child and
// retire the oldest individual.
BaselineResult regularized_evolution(const SpaceLimits& limits,
                                     const Evaluator& evaluator,
                                     const BaselineConfig& cfg);

// Steepest-ascent over single-edit neighborhoods (one non-Terminate action,
// or one reversible digit decrement); restarts from a fresh random
// architecture when it would revisit a state.
BaselineResult hill_climb(const SpaceLimits& limits,
                          const Evaluator& evaluator,
                          const BaselineConfig& cfg);

// Per-state action values, aligned with enumerate_actions order.
using QTable = std::map<EncodedArch, std::vector<double>>;

// Tabular one-step Q-learning with an epsilon-greedy policy; terminal reward
// is the architecture's accuracy, intermediate rewards are zero. Throws
// SpaceTooLarge when the state table would not fit the enumeration cap.
// table_out, when given, receives the learned action values.
BaselineResult q_learning(const SpaceLimits& limits,
                          const Evaluator& evaluator,
                          const BaselineConfig& cfg,
                          QTable* table_out = nullptr);

// Regularized evolution's mutation operator, exposed for property tests:
// one uniform single edit (DAG: flip an adjacency bit, change a node op,
// add a node, or remove a node; cell: change a branch layer, add a block,
// or drop a trailing block) followed by a completeness repair. The result
// is always a valid complete architecture.
ArchState mutate_architecture(const ArchState& parent,
                              const SpaceLimits& limits, Rng& rng);

}  // namespace archsearch
