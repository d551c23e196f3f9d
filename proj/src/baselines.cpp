#include "archsearch/baselines.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <variant>

#include "archsearch/mcts.hpp"
#include "archsearch/space_enum.hpp"

namespace archsearch {

namespace {

// Budget, target and trace bookkeeping shared by every baseline. Budgets
// count unique evaluated architectures; repeat lookups hit the cache and
// cost nothing, mirroring the MCTS session's accounting.
class TraceRecorder {
public:
    TraceRecorder(const Evaluator& evaluator, const BaselineConfig& cfg)
        : evaluator_(evaluator), cfg_(cfg) {}

    double evaluate(const EncodedArch& enc) {
        const auto it = cache_.find(enc);
        if (it != cache_.end()) return it->second;
        const double acc = evaluator_.accuracy_of(enc);
        cache_.emplace(enc, acc);
        ledger_.record(make_evaluation(acc, false, cfg_.cost));
        ++unique_;
        if (!best_encoding_ || acc > best_accuracy_) {
            best_accuracy_ = acc;
            best_encoding_ = enc;
        }
        events_.push_back(
            TraceEvent{unique_, enc, acc, best_accuracy_, ledger_.epochs});
        return acc;
    }

    bool budget_left() const {
        return static_cast<std::uint64_t>(unique_) < cfg_.budget;
    }
    bool target_reached() const {
        return cfg_.target_accuracy && unique_ > 0 &&
               best_accuracy_ >=
                   *cfg_.target_accuracy - cfg_.target_tolerance;
    }
    bool should_stop() const { return !budget_left() || target_reached(); }

    BaselineResult finish(std::string algorithm) {
        BaselineResult r;
        r.algorithm = std::move(algorithm);
        r.seed = cfg_.seed;
        r.events = std::move(events_);
        r.best_accuracy = best_accuracy_;
        r.best_encoding = best_encoding_;
        r.ledger = ledger_;
        if (cfg_.target_accuracy) {
            const double bar =
                *cfg_.target_accuracy - cfg_.target_tolerance;
            for (const TraceEvent& e : r.events) {
                if (e.best_so_far >= bar) {
                    r.samples_to_target = e.unique_eval_index;
                    break;
                }
            }
        }
        return r;
    }

private:
    const Evaluator& evaluator_;
    const BaselineConfig& cfg_;
    std::map<EncodedArch, double> cache_;
    std::vector<TraceEvent> events_;
    CostLedger ledger_;
    std::int64_t unique_ = 0;
    double best_accuracy_ = 0.0;
    std::optional<EncodedArch> best_encoding_;
};

// Random terminal sampling via the engine's rollout rule, so "uniform
// random" means the same thing here as inside MCTS simulations.
class Roller {
public:
    Roller(const SpaceLimits& limits, const BaselineConfig& cfg)
        : engine_(limits, roller_config(cfg), nullptr),
          root_(root_state(limits)) {}

    std::optional<EncodedArch> sample(Rng& rng) const {
        return engine_.simulate(root_, 0, rng);
    }

private:
    static SearchConfig roller_config(const BaselineConfig& cfg) {
        SearchConfig s;
        s.seed = cfg.seed;
        s.k = 0;
        s.meta_dnn_enabled = false;
        s.max_tree_depth = cfg.max_tree_depth;
        return s;
    }

    MctsEngine engine_;
    ArchState root_;
};

// Hard stop against degenerate spins (exhausted spaces, dead-end rollouts);
// matches the session's iteration valve.
std::uint64_t valve_for(const BaselineConfig& cfg) {
    return std::max<std::uint64_t>(cfg.budget * 1000ULL, 1000);
}

void check_common(const BaselineConfig& cfg) {
    if (cfg.target_accuracy &&
        (*cfg.target_accuracy < 0.0 || *cfg.target_accuracy > 1.0)) {
        throw ConfigError("target accuracy must lie in [0,1]");
    }
    if (cfg.max_tree_depth < 0) {
        throw ConfigError("max_tree_depth must be >= 0");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Random search

BaselineResult random_search(const SpaceLimits& limits,
                             const Evaluator& evaluator,
                             const BaselineConfig& cfg) {
    check_common(cfg);
    TraceRecorder rec(evaluator, cfg);
    const Roller roller(limits, cfg);
    Rng rng(cfg.seed);
    const std::uint64_t valve = valve_for(cfg);
    for (std::uint64_t attempt = 0; attempt < valve && !rec.should_stop();
         ++attempt) {
        if (const std::optional<EncodedArch> enc = roller.sample(rng)) {
            rec.evaluate(*enc);
        }
    }
    return rec.finish("rs");
}

// ---------------------------------------------------------------------------
// Regularized evolution

namespace {

// Completeness repair: give every intermediate node an incoming and an
// outgoing edge and make sure something feeds the output. In the strictly
// upper-triangular graph this is sufficient: predecessor chains descend to
// the input and successor chains climb to the output.
void repair_dag(DagArchitecture& a) {
    const int n = a.num_nodes();
    const int out = n - 1;
    for (int k = 1; k < out; ++k) {
        bool has_in = false;
        bool has_out = false;
        for (int i = 0; i < k; ++i) has_in = has_in || a.edge(i, k);
        for (int j = k + 1; j < n; ++j) has_out = has_out || a.edge(k, j);
        if (!has_in) a.add_edge(0, k);
        if (!has_out) a.add_edge(k, out);
    }
    bool feeds_output = false;
    for (int i = 0; i < out; ++i) feeds_output = feeds_output || a.edge(i, out);
    if (!feeds_output) a.add_edge(0, out);
}

constexpr int kMutationRetries = 16;

ArchState mutate_dag(const DagArchitecture& parent, const SpaceLimits& limits,
                     Rng& rng) {
    enum Kind { flip_edge, change_op, grow, shrink };
    for (int attempt = 0; attempt < kMutationRetries; ++attempt) {
        DagArchitecture child = parent;
        child.set_terminal(false);
        const int n = child.num_nodes();

        std::vector<Kind> kinds = {flip_edge};
        if (n > 2 && limits.num_op_types >= 2) kinds.push_back(change_op);
        if (n < limits.max_nodes) kinds.push_back(grow);
        if (n > 2) kinds.push_back(shrink);

        switch (kinds[rng.next_below(kinds.size())]) {
            case flip_edge: {
                const int pairs = n * (n - 1) / 2;
                int left = static_cast<int>(rng.next_below(pairs));
                int i = 0;
                int j = 0;
                for (i = 0; i < n - 1; ++i) {
                    const int row = n - 1 - i;
                    if (left < row) {
                        j = i + 1 + left;
                        break;
                    }
                    left -= row;
                }
                if (child.edge(i, j)) {
                    child.remove_edge(i, j);
                } else {
                    child.add_edge(i, j);
                }
                break;
            }
            case change_op: {
                const int node = 1 + static_cast<int>(rng.next_below(n - 2));
                int op =
                    1 + static_cast<int>(rng.next_below(limits.num_op_types - 1));
                if (op >= child.op(node)) ++op;  // uniform over the others
                child.set_op(node, op);
                break;
            }
            case grow:
                child.add_node(
                    1 + static_cast<int>(rng.next_below(limits.num_op_types)));
                break;
            case shrink:
                child.remove_node(1 +
                                  static_cast<int>(rng.next_below(n - 2)));
                break;
        }

        repair_dag(child);
        ArchState state{std::move(child)};
        if (is_complete(state) && validate(state, limits).ok()) return state;
    }
    DagArchitecture fallback = parent;  // pathological bounds: keep the parent
    fallback.set_terminal(false);
    return ArchState{std::move(fallback)};
}

ArchState mutate_cell(const CellArchitecture& parent,
                      const SpaceLimits& limits, Rng& rng) {
    enum Kind { change_layer, add_block, drop_block };
    for (int attempt = 0; attempt < kMutationRetries; ++attempt) {
        CellArchitecture child = parent;
        child.set_terminal(false);

        std::vector<Kind> kinds;
        if (limits.num_layer_types >= 2) kinds.push_back(change_layer);
        std::vector<int> roomy;
        std::vector<int> shrinkable;
        for (int c = 0; c < 2; ++c) {
            if (static_cast<int>(child.cell(c).size()) < limits.max_blocks) {
                roomy.push_back(c);
            }
            if (child.cell(c).size() > 1) shrinkable.push_back(c);
        }
        if (!roomy.empty()) kinds.push_back(add_block);
        if (!shrinkable.empty()) kinds.push_back(drop_block);
        if (kinds.empty()) break;

        switch (kinds[rng.next_below(kinds.size())]) {
            case change_layer: {
                const int c = static_cast<int>(rng.next_below(2));
                auto& blocks = child.cell(c);
                CellBlock& b =
                    blocks[rng.next_below(blocks.size())];
                int& layer = rng.next_below(2) == 0 ? b.left_layer
                                                    : b.right_layer;
                int pick = 1 + static_cast<int>(
                                   rng.next_below(limits.num_layer_types - 1));
                if (pick >= layer) ++pick;
                layer = pick;
                break;
            }
            case add_block: {
                const int c = roomy[rng.next_below(roomy.size())];
                auto& blocks = child.cell(c);
                const int refs = static_cast<int>(blocks.size()) + 2;
                CellBlock b;
                b.left_input = static_cast<int>(rng.next_below(refs));
                b.right_input = static_cast<int>(rng.next_below(refs));
                b.left_layer =
                    1 + static_cast<int>(rng.next_below(limits.num_layer_types));
                b.right_layer =
                    1 + static_cast<int>(rng.next_below(limits.num_layer_types));
                blocks.push_back(b);
                break;
            }
            case drop_block: {
                // Only the trailing block is reference-safe to remove.
                const int c = shrinkable[rng.next_below(shrinkable.size())];
                child.cell(c).pop_back();
                break;
            }
        }

        ArchState state{std::move(child)};
        if (is_complete(state) && validate(state, limits).ok()) return state;
    }
    CellArchitecture fallback = parent;
    fallback.set_terminal(false);
    return ArchState{std::move(fallback)};
}

}  // namespace

ArchState mutate_architecture(const ArchState& parent,
                              const SpaceLimits& limits, Rng& rng) {
    if (std::holds_alternative<DagArchitecture>(parent)) {
        return mutate_dag(std::get<DagArchitecture>(parent), limits, rng);
    }
    return mutate_cell(std::get<CellArchitecture>(parent), limits, rng);
}

BaselineResult regularized_evolution(const SpaceLimits& limits,
                                     const Evaluator& evaluator,
                                     const BaselineConfig& cfg) {
    check_common(cfg);
    if (cfg.population_size < 1) {
        throw ConfigError("population_size must be >= 1");
    }
    if (cfg.tournament_size < 1 ||
        cfg.tournament_size > cfg.population_size) {
        throw ConfigError("tournament_size must lie in [1, population_size]");
    }

    TraceRecorder rec(evaluator, cfg);
    const Roller roller(limits, cfg);
    Rng rng(cfg.seed);
    const std::uint64_t valve = valve_for(cfg);
    std::uint64_t attempts = 0;

    std::deque<std::pair<EncodedArch, double>> population;
    while (static_cast<int>(population.size()) < cfg.population_size &&
           !rec.should_stop() && attempts++ < valve) {
        const std::optional<EncodedArch> enc = roller.sample(rng);
        if (!enc) continue;
        population.emplace_back(*enc, rec.evaluate(*enc));
    }

    std::vector<int> idx;
    while (!rec.should_stop() && !population.empty() && attempts++ < valve) {
        const int n = static_cast<int>(population.size());
        const int t = std::min(cfg.tournament_size, n);
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        int winner = -1;
        double winner_acc = -1.0;
        for (int i = 0; i < t; ++i) {
            const int j =
                i + static_cast<int>(rng.next_below(
                        static_cast<std::uint64_t>(n - i)));
            std::swap(idx[i], idx[j]);
            const auto& candidate = population[idx[i]];
            if (candidate.second > winner_acc) {  // earliest draw wins ties
                winner_acc = candidate.second;
                winner = idx[i];
            }
        }
        const ArchState parent = decode(population[winner].first, limits);
        const EncodedArch child =
            encode(mutate_architecture(parent, limits, rng));
        const double acc = rec.evaluate(child);
        population.emplace_back(child, acc);
        population.pop_front();  // retire the oldest
    }
    return rec.finish("re");
}

// ---------------------------------------------------------------------------
// Hill climbing

namespace {

// Single-edit neighborhood: every legal non-Terminate action, plus every
// one-digit decrement that still decodes to a valid complete architecture
// (the reversible shrinking moves). Deterministically ordered, current
// state excluded.
std::vector<EncodedArch> hc_neighbors(const EncodedArch& enc,
                                      const SpaceLimits& limits) {
    std::set<EncodedArch> out;
    const ArchState state = decode(enc, limits);
    for (const Action& a : enumerate_actions(state, limits)) {
        if (std::holds_alternative<ActTerminate>(a)) continue;
        const ArchState next = apply_action(state, a, limits);
        if (is_complete(next) && validate(next, limits).ok()) {
            out.insert(encode(next));
        }
    }
    for (std::size_t i = 0; i < enc.digits.size(); ++i) {
        if (enc.digits[i] == 0) continue;
        EncodedArch cand = enc;
        --cand.digits[i];
        try {
            const ArchState s = decode(cand, limits);
            if (is_complete(s) && validate(s, limits).ok()) {
                out.insert(std::move(cand));
            }
        } catch (const std::exception&) {
            // not a decodable state; not a neighbor
        }
    }
    out.erase(enc);
    return {out.begin(), out.end()};
}

}  // namespace

BaselineResult hill_climb(const SpaceLimits& limits,
                          const Evaluator& evaluator,
                          const BaselineConfig& cfg) {
    check_common(cfg);
    TraceRecorder rec(evaluator, cfg);
    const Roller roller(limits, cfg);
    Rng rng(cfg.seed);
    const std::uint64_t valve = valve_for(cfg);
    std::uint64_t attempts = 0;
    std::set<EncodedArch> visited;

    const auto draw_unvisited_start =
        [&]() -> std::optional<EncodedArch> {
        while (attempts++ < valve) {
            const std::optional<EncodedArch> enc = roller.sample(rng);
            if (enc && visited.find(*enc) == visited.end()) return enc;
        }
        return std::nullopt;
    };

    std::optional<EncodedArch> cur = draw_unvisited_start();
    while (cur && !rec.should_stop() && attempts++ < valve) {
        const double cur_acc = rec.evaluate(*cur);
        visited.insert(*cur);
        if (rec.should_stop()) break;

        std::optional<EncodedArch> best_neighbor;
        double best_acc = cur_acc;  // strict improvement required
        for (const EncodedArch& nb : hc_neighbors(*cur, limits)) {
            if (rec.should_stop()) break;
            const double acc = rec.evaluate(nb);
            if (acc > best_acc) {
                best_acc = acc;
                best_neighbor = nb;
            }
        }
        if (rec.should_stop()) break;

        if (best_neighbor && visited.find(*best_neighbor) == visited.end()) {
            cur = best_neighbor;
        } else {
            // Local maximum, or the improving move re-enters a visited
            // state; either way the walk would repeat itself.
            if (!cfg.restart_on_revisit) break;
            cur = draw_unvisited_start();
        }
    }
    return rec.finish("hc");
}

// ---------------------------------------------------------------------------
// Tabular Q-learning

BaselineResult q_learning(const SpaceLimits& limits,
                          const Evaluator& evaluator,
                          const BaselineConfig& cfg, QTable* table_out) {
    check_common(cfg);
    if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0) {
        throw ConfigError("epsilon must lie in [0,1]");
    }
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
        throw ConfigError("alpha must lie in [0,1]");
    }
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0) {
        throw ConfigError("gamma must lie in [0,1]");
    }
    const std::uint64_t estimate = estimate_space_size(limits);
    if (estimate > kDefaultEnumerationCap) {
        throw SpaceTooLarge("estimated " + std::to_string(estimate) +
                            " states exceeds the Q-table cap " +
                            std::to_string(kDefaultEnumerationCap));
    }

    TraceRecorder rec(evaluator, cfg);
    Rng rng(cfg.seed);
    const int max_depth = cfg.max_tree_depth > 0
                              ? cfg.max_tree_depth
                              : default_max_tree_depth(limits);
    const std::uint64_t valve = valve_for(cfg);

    // Lazily initialized to q_init; std::map keeps references stable while
    // new states are added mid-episode.
    QTable table;
    const auto q_of = [&](const EncodedArch& s,
                          std::size_t n_actions) -> std::vector<double>& {
        const auto it = table.find(s);
        if (it != table.end()) return it->second;
        return table.emplace(s, std::vector<double>(n_actions, cfg.q_init))
            .first->second;
    };

    for (std::uint64_t episode = 0; episode < valve && !rec.should_stop();
         ++episode) {
        ArchState state = root_state(limits);
        int depth = 0;
        while (true) {
            const std::vector<Action> actions =
                enumerate_actions(state, limits);
            if (actions.empty()) break;
            std::vector<double>& q = q_of(encode(state), actions.size());

            std::size_t choice = 0;  // Terminate comes first
            if (depth < max_depth) {
                if (rng.next_double() < cfg.epsilon) {
                    choice = rng.next_below(actions.size());
                } else {
                    for (std::size_t i = 1; i < q.size(); ++i) {
                        if (q[i] > q[choice]) choice = i;
                    }
                }
            }

            const ArchState next =
                apply_action(state, actions[choice], limits);
            if (is_terminal(next)) {
                double reward = 0.0;  // incomplete terminals pay nothing
                if (is_complete(next)) reward = rec.evaluate(encode(next));
                q[choice] += cfg.alpha * (reward - q[choice]);
                break;
            }
            const std::vector<Action> next_actions =
                enumerate_actions(next, limits);
            const std::vector<double>& qn =
                q_of(encode(next), next_actions.size());
            double qn_max = qn.empty() ? 0.0 : qn[0];
            for (const double v : qn) qn_max = std::max(qn_max, v);
            q[choice] += cfg.alpha * (cfg.gamma * qn_max - q[choice]);
            state = next;
            ++depth;
        }
    }
    if (table_out) *table_out = std::move(table);
    return rec.finish("ql");
}

}  // namespace archsearch
