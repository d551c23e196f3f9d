#include "archsearch/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "archsearch/util.hpp"

namespace archsearch {

double ucb_score(double q_sum, std::int64_t visits,
                 std::int64_t parent_visits, double c) {
    if (visits == 0) return std::numeric_limits<double>::infinity();
    const double exploit = q_sum / static_cast<double>(visits);
    const double explore =
        2.0 * c *
        std::sqrt(2.0 * std::log(static_cast<double>(parent_visits)) /
                  static_cast<double>(visits));
    return exploit + explore;
}

double hybrid_q(double true_acc, const std::vector<double>& predictions) {
    if (predictions.empty()) {
        throw EmptyPredictions("hybrid reward needs at least one prediction");
    }
    double sum = 0.0;
    for (double p : predictions) sum += p;
    return (true_acc + sum / static_cast<double>(predictions.size())) / 2.0;
}

// ---------------------------------------------------------------------------
// SearchTree

SearchTree::SearchTree(const SpaceLimits& limits) : limits_(limits) {
    Node root(root_state(limits_));
    for (const Action& a : enumerate_actions(root.state, limits_)) {
        root.edges.push_back(Edge{a, 0.0, 0, -1});
    }
    nodes_.push_back(std::move(root));
}

SearchTree::Edge& SearchTree::edge(int node_id, int edge_index) {
    return nodes_.at(node_id).edges.at(edge_index);
}

const SearchTree::Edge& SearchTree::edge(int node_id, int edge_index) const {
    return nodes_.at(node_id).edges.at(edge_index);
}

void SearchTree::add_visit_total(int node_id, std::int64_t n) {
    nodes_.at(node_id).visit_total += n;
}

int SearchTree::expand(int node_id, int edge_index) {
    Edge& e = edge(node_id, edge_index);
    if (e.child != -1) {
        throw AlreadyExpanded("edge " + std::to_string(edge_index) +
                              " of node " + std::to_string(node_id) +
                              " already has child " + std::to_string(e.child));
    }
    Node child(apply_action(nodes_[node_id].state, e.action, limits_));
    child.parent = node_id;
    child.parent_edge = edge_index;
    child.depth = nodes_[node_id].depth + 1;
    for (const Action& a : enumerate_actions(child.state, limits_)) {
        child.edges.push_back(Edge{a, 0.0, 0, -1});
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(child));
    nodes_[node_id].edges[edge_index].child = id;
    return id;
}

SearchTree::Selection SearchTree::select(double c) const {
    Selection sel;
    int current = 0;
    while (true) {
        const Node& n = nodes_[current];
        if (n.edges.empty()) {  // terminal state: nothing to descend into
            sel.leaf = current;
            sel.pending_edge = -1;
            return sel;
        }
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(n.edges.size()); ++i) {
            const double s =
                ucb_score(n.edges[i].q_sum, n.edges[i].visits, n.visit_total, c);
            if (s > best_score) {  // strict: ties keep the lowest index
                best_score = s;
                best = i;
            }
        }
        sel.path.emplace_back(current, best);
        if (n.edges[best].child == -1) {
            sel.leaf = current;
            sel.pending_edge = best;
            return sel;
        }
        current = n.edges[best].child;
    }
}

void SearchTree::backpropagate(const std::vector<std::pair<int, int>>& path,
                               double q, int n) {
    for (const auto& [node_id, edge_index] : path) {
        Edge& e = nodes_.at(node_id).edges.at(edge_index);
        e.q_sum += q;
        e.visits += n;
        nodes_[node_id].visit_total += n;
    }
}

std::optional<std::pair<EncodedArch, int>> find_transfer_parent(
    const SearchTree& tree, int node_id,
    const std::map<EncodedArch, double>& evaluated) {
    const EncodedArch target = encode(tree.node(node_id).state);
    std::optional<std::pair<EncodedArch, int>> best;
    for (int p = tree.node(node_id).parent; p != -1; p = tree.node(p).parent) {
        const EncodedArch enc = encode(tree.node(p).state);
        if (evaluated.find(enc) == evaluated.end()) continue;
        const int d = edit_distance(enc, target);
        // Strict <: the first (nearest) ancestor wins distance ties.
        if (!best || d < best->second) best = std::make_pair(enc, d);
    }
    return best;
}

// ---------------------------------------------------------------------------
// MctsEngine

MctsEngine::MctsEngine(const SpaceLimits& limits, const SearchConfig& cfg,
                       Surrogate* surrogate)
    : limits_(limits), cfg_(cfg), surrogate_(surrogate), tree_(limits) {
    if (cfg_.c < 0) throw ConfigError("exploration constant must be >= 0");
    if (cfg_.k < 0) throw ConfigError("surrogate rollout count must be >= 0");
    if (cfg_.max_tree_depth < 0) {
        throw ConfigError("max tree depth must be >= 0");
    }
    max_depth_ = cfg_.max_tree_depth > 0 ? cfg_.max_tree_depth
                                         : default_max_tree_depth(limits_);
}

std::optional<EncodedArch> MctsEngine::simulate(const ArchState& start,
                                                int start_depth,
                                                Rng& rng) const {
    for (int attempt = 0; attempt < kRolloutRetries; ++attempt) {
        ArchState s = start;
        int depth = start_depth;
        while (!is_terminal(s)) {
            if (depth >= max_depth_) {
                s = apply_action(s, ActTerminate{}, limits_);
                break;
            }
            const std::vector<Action> actions = enumerate_actions(s, limits_);
            const std::size_t pick = rng.next_below(actions.size());
            s = apply_action(s, actions[pick], limits_);
            ++depth;
        }
        if (is_complete(s)) return encode(s);
    }
    return std::nullopt;
}

SimulationOutcome MctsEngine::search_iteration(Rng& rng) {
    SearchTree::Selection sel = tree_.select(cfg_.c);
    int node_id = sel.leaf;
    if (sel.pending_edge >= 0) {
        node_id = tree_.expand(sel.leaf, sel.pending_edge);
    }

    SimulationOutcome out;
    out.rollout_from = node_id;

    const SearchTree::Node& node = tree_.node(node_id);
    const std::optional<EncodedArch> sim0 =
        simulate(node.state, node.depth, rng);
    if (!sim0) {
        // Degenerate sub-space: count the visit, report reward 0.
        out.no_valid_terminal = true;
        tree_.backpropagate(sel.path, 0.0, 1);
        ++iterations_;
        return out;
    }
    out.sampled_arch = *sim0;

    double q_hat = 0.0;
    if (cfg_.meta_dnn_enabled && surrogate_ != nullptr && cfg_.k > 0) {
        double sum = 0.0;
        for (int i = 0; i < cfg_.k; ++i) {
            const std::optional<EncodedArch> sim =
                simulate(node.state, node.depth, rng);
            // A failed prediction rollout contributes reward 0, same as a
            // failed evaluation rollout.
            const double p = sim ? surrogate_->predict(*sim) : 0.0;
            sum += std::clamp(p, 0.0, 1.0);
        }
        q_hat = sum / cfg_.k;
    }
    out.predicted_mean = q_hat;
    tree_.backpropagate(sel.path, q_hat, 1);
    ++iterations_;

    const auto hit = evaluated_.find(out.sampled_arch);
    if (hit != evaluated_.end()) {
        // Re-sampled architecture: reuse the cached accuracy, run the
        // corrective pass now, issue no duplicate job.
        corrective(sel.path, q_hat, hit->second);
        out.true_accuracy = hit->second;
        return out;
    }

    out.job_id = next_job_id_++;
    out.needs_evaluation = true;
    pending_.emplace(out.job_id, Pending{out.sampled_arch, std::move(sel.path),
                                         q_hat, node_id});
    return out;
}

void MctsEngine::corrective(const std::vector<std::pair<int, int>>& path,
                            double q_hat, double accuracy) {
    // With the meta-DNN on, q_final = (acc + q_hat)/2 so the correction is
    // (acc - q_hat)/2; the ablation propagates the plain accuracy instead.
    const double q_final =
        cfg_.meta_dnn_enabled ? (accuracy + q_hat) / 2.0 : accuracy;
    tree_.backpropagate(path, q_final - q_hat, 0);
}

void MctsEngine::apply_result(std::uint64_t job_id, double true_accuracy) {
    const auto it = pending_.find(job_id);
    if (it == pending_.end()) {
        throw UnknownOutcome("no pending record for job " +
                             std::to_string(job_id));
    }
    const Pending rec = std::move(it->second);
    pending_.erase(it);
    corrective(rec.path, rec.predicted_mean, true_accuracy);
    evaluated_.emplace(rec.arch, true_accuracy);
    if (cfg_.meta_dnn_enabled && surrogate_ != nullptr) {
        surrogate_->add_sample(rec.arch, true_accuracy);
    }
}

// ---------------------------------------------------------------------------

std::string dump_tree(const SearchTree& tree) {
    std::string out;
    for (int id = 0; id < tree.size(); ++id) {
        const SearchTree::Node& n = tree.node(id);
        out += std::to_string(id);
        out += ' ';
        out += std::to_string(n.parent);
        out += ' ';
        if (id == 0) {
            out += "root 0 0";
        } else {
            const SearchTree::Edge& e = tree.edge(n.parent, n.parent_edge);
            out += action_to_text(e.action);
            out += ' ';
            out += format_double(e.q_sum);
            out += ' ';
            out += std::to_string(e.visits);
        }
        out += ' ';
        out += encode(n.state).text();
        out += '\n';
    }
    return out;
}

}  // namespace archsearch
