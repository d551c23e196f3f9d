#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "archsearch/errors.hpp"
#include "archsearch/rng.hpp"
#include "archsearch/space.hpp"
#include "archsearch/surrogate.hpp"

namespace archsearch {

// Engine knobs; fixed for a run and recorded in every report.
struct SearchConfig {
    double c = 0.5;          // exploration constant
    int k = 10;              // surrogate rollouts per expansion
    int max_tree_depth = 0;  // rollout depth cap; 0 = derive from the limits
    std::uint64_t seed = 0;
    bool meta_dnn_enabled = true;
};

// UCB1 with exploration term 2c*sqrt(2 ln N(s) / N(s,a)). An unvisited
// action scores +infinity so it is tried before any revisit; callers break
// ties by lowest action index.
double ucb_score(double q_sum, std::int64_t visits,
                 std::int64_t parent_visits, double c);

// Hybrid reward: (true accuracy + mean prediction) / 2.
// Throws EmptyPredictions.
double hybrid_q(double true_acc, const std::vector<double>& predictions);

// ---------------------------------------------------------------------------
// Tree

// Single-owner search tree. Nodes are append-only and edges keep a fixed
// order (the enumerate_actions order), so a stored (node, edge) path stays
// valid forever — the corrective backprop pass replays such paths.
class SearchTree {
public:
    struct Edge {
        Action action;
        double q_sum = 0.0;       // accumulated Q(s,a)
        std::int64_t visits = 0;  // N(s,a)
        int child = -1;           // node id; -1 = not expanded yet
    };

    struct Node {
        explicit Node(ArchState s) : state(std::move(s)) {}

        int parent = -1;       // -1 for root
        int parent_edge = -1;  // index into node(parent).edges
        int depth = 0;         // actions from root
        ArchState state;
        std::vector<Edge> edges;       // empty = terminal state
        std::int64_t visit_total = 0;  // cached N(s) = sum of edge visits
    };

    explicit SearchTree(const SpaceLimits& limits);

    const SpaceLimits& limits() const { return limits_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_.at(id); }

    // Mutable edge access exists for snapshot restoration and tests; the
    // engine itself mutates stats through expand/backpropagate only.
    Edge& edge(int node_id, int edge_index);
    const Edge& edge(int node_id, int edge_index) const;
    void add_visit_total(int node_id, std::int64_t n);

    // Creates the child with all-zero stats and its own legal action set.
    // Throws AlreadyExpanded when the edge has a child already.
    int expand(int node_id, int edge_index);

    struct Selection {
        std::vector<std::pair<int, int>> path;  // (node, edge) root -> leaf
        int leaf = 0;           // node where the walk stopped
        int pending_edge = -1;  // edge awaiting expansion; -1 = terminal leaf
    };

    // UCB1 descent from the root: argmax over edges, ties to the lowest
    // index, stopping at an unexpanded edge or a terminal node.
    Selection select(double c) const;

    // q_sum += q and visits += n on every path edge, maintaining the cached
    // node totals. n=1 is the preemptive pass, n=0 the corrective one.
    void backpropagate(const std::vector<std::pair<int, int>>& path, double q,
                       int n);

private:
    SpaceLimits limits_;
    std::vector<Node> nodes_;
};

// Among the proper ancestors of `node_id` whose architecture has a recorded
// true evaluation, the one with minimal edit distance to the node's own
// architecture; ties go to the nearest ancestor. nullopt when none qualify.
std::optional<std::pair<EncodedArch, int>> find_transfer_parent(
    const SearchTree& tree, int node_id,
    const std::map<EncodedArch, double>& evaluated);

// ---------------------------------------------------------------------------
// Engine

struct SimulationOutcome {
    std::uint64_t job_id = 0;  // 0 when no evaluation job was issued
    EncodedArch sampled_arch;  // terminal architecture of simulation 0
    int rollout_from = -1;     // tree node the rollouts started at
    double predicted_mean = 0.0;          // q-hat
    std::optional<double> true_accuracy;  // filled on cache reuse
    bool needs_evaluation = false;
    bool no_valid_terminal = false;
};

// The MCTS engine: selection, expansion, surrogate-assisted simulation and
// the split preemptive/corrective backpropagation. The caller owns the run
// RNG and the dispatch of evaluation jobs; the engine owns the tree, the
// pending-outcome records and the cache of true evaluations.
class MctsEngine {
public:
    static constexpr int kRolloutRetries = 16;

    // The surrogate pointer is non-owning and may be null; rewards follow
    // cfg.meta_dnn_enabled, and a meta-enabled run is expected to supply a
    // surrogate (without one the k prediction rollouts are skipped and
    // q-hat stays 0).
    MctsEngine(const SpaceLimits& limits, const SearchConfig& cfg,
               Surrogate* surrogate = nullptr);

    // One select -> expand -> (k+1 rollouts) -> preemptive-backprop pass.
    // Simulation 0's architecture either hits the evaluation cache (the
    // corrective pass runs immediately, no job issued) or becomes a pending
    // job the caller must evaluate and feed back through apply_result.
    SimulationOutcome search_iteration(Rng& rng);

    // Corrective pass: backpropagates (q_final - q_hat) with n=0 along the
    // stored path, records the accuracy in the cache and the surrogate
    // buffer. Throws UnknownOutcome for a job id with no pending record.
    void apply_result(std::uint64_t job_id, double true_accuracy);

    // Uniform-random rollout to a terminal architecture, with Terminate part
    // of the uniform choice and a forced Terminate at the depth cap.
    // Incomplete terminals are re-rolled; nullopt after the retry budget.
    std::optional<EncodedArch> simulate(const ArchState& start,
                                        int start_depth, Rng& rng) const;

    std::optional<std::pair<EncodedArch, int>> transfer_parent_of(
        int node_id) const {
        return find_transfer_parent(tree_, node_id, evaluated_);
    }

    const SearchTree& tree() const { return tree_; }
    SearchTree& tree() { return tree_; }
    const SearchConfig& config() const { return cfg_; }
    const SpaceLimits& limits() const { return limits_; }
    int max_depth() const { return max_depth_; }
    std::uint64_t iterations() const { return iterations_; }

    struct Pending {
        EncodedArch arch;
        std::vector<std::pair<int, int>> path;
        double predicted_mean = 0.0;
        int rollout_from = -1;
    };
    const std::map<std::uint64_t, Pending>& pending() const {
        return pending_;
    }
    const std::map<EncodedArch, double>& evaluated() const {
        return evaluated_;
    }

    // Snapshot restoration hooks.
    void restore_evaluated(std::map<EncodedArch, double> evaluated) {
        evaluated_ = std::move(evaluated);
    }
    void restore_pending(std::map<std::uint64_t, Pending> pending) {
        pending_ = std::move(pending);
    }
    void set_iterations(std::uint64_t n) { iterations_ = n; }
    std::uint64_t next_job_id() const { return next_job_id_; }
    void set_next_job_id(std::uint64_t id) { next_job_id_ = id; }

private:
    void corrective(const std::vector<std::pair<int, int>>& path,
                    double q_hat, double accuracy);

    SpaceLimits limits_;
    SearchConfig cfg_;
    Surrogate* surrogate_;
    int max_depth_;
    SearchTree tree_;
    std::map<std::uint64_t, Pending> pending_;
    std::map<EncodedArch, double> evaluated_;
    std::uint64_t next_job_id_ = 1;
    std::uint64_t iterations_ = 0;
};

// Line-oriented dump, one node per line:
//   node_id parent_id action q_sum visits encoding
// where action/q_sum/visits describe the edge into the node ("root 0 0" for
// the root). Byte-stable across runs with equal seeds.
std::string dump_tree(const SearchTree& tree);

}  // namespace archsearch
