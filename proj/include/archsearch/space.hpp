#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "archsearch/errors.hpp"

namespace archsearch {

enum class Domain { dag, cell };

// Bounds of a design domain. The cell-domain fields are fixed by the design
// rules (5 blocks, 12 layer types, block depth 2) but kept configurable.
struct SpaceLimits {
    Domain domain = Domain::dag;

    // DAG domain
    int max_nodes = 7;
    int num_op_types = 3;
    std::optional<int> max_edges;  // default: anything upper-triangular

    // Cell domain
    int max_blocks = 5;
    int num_layer_types = 12;
    int max_layers_per_branch = 1;
    int block_depth_limit = 2;

    bool operator==(const SpaceLimits&) const = default;
};

// Layer vocabulary of the cell domain, in code order 1..12.
// code = index in this table + 1.
inline constexpr std::array<const char*, 12> kCellLayerNames = {
    "3x3 avg pool",  "5x5 avg pool",  "7x7 avg pool",
    "3x3 max pool",  "5x5 max pool",  "7x7 max pool",
    "3x3 conv",      "5x5 conv",      "identity",
    "3x3 depth-separable conv", "5x5 depth-separable conv",
    "7x7 depth-separable conv",
};

int cell_layer_code(const std::string& name);  // throws ConfigError if unknown

// ---------------------------------------------------------------------------
// States

// A network design in the DAG domain. Node 0 is the input, node
// num_nodes()-1 the output; intermediate nodes carry an op code in
// 1..num_op_types. The adjacency is strictly upper-triangular, so acyclicity
// is structural. The frame (max_nodes, num_op_types) is fixed at construction
// and determines the encoding length.
class DagArchitecture {
public:
    DagArchitecture(int max_nodes, int num_op_types);

    static DagArchitecture root(const SpaceLimits& limits) {
        return DagArchitecture(limits.max_nodes, limits.num_op_types);
    }

    int max_nodes() const { return max_nodes_; }
    int num_op_types() const { return num_op_types_; }
    int num_nodes() const { return num_nodes_; }
    int num_edges() const { return num_edges_; }
    bool terminal() const { return terminal_; }
    void set_terminal(bool t) { terminal_ = t; }

    bool edge(int i, int j) const { return adj_[i * max_nodes_ + j] != 0; }
    int op(int node) const { return ops_[node - 1]; }  // intermediate nodes only

    // Mutators keep the upper-triangular invariant; used by apply_action and
    // the evolution mutation operator.
    void add_edge(int i, int j);
    void remove_edge(int i, int j);
    void set_op(int node, int op_code);
    // Inserts a fresh intermediate node just before the output; edges into
    // the old output index follow the output to its new index.
    void add_node(int op_code);
    // Removes intermediate `node`, dropping its edges and shifting the nodes
    // above it down by one.
    void remove_node(int node);

    // Input->output reachability plus the completeness rule: an architecture
    // may be evaluated only if the output is reachable and every intermediate
    // node lies on some input->output path.
    bool complete() const;

    // Longest input->output path, in edges; nullopt when unreachable.
    std::optional<int> longest_path() const;

    // Structural equality; the terminal flag is search bookkeeping and does
    // not participate.
    bool operator==(const DagArchitecture& o) const {
        return max_nodes_ == o.max_nodes_ && num_op_types_ == o.num_op_types_ &&
               num_nodes_ == o.num_nodes_ && adj_ == o.adj_ && ops_ == o.ops_;
    }

private:
    int max_nodes_;
    int num_op_types_;
    int num_nodes_;
    int num_edges_ = 0;
    std::vector<std::uint8_t> adj_;  // max_nodes x max_nodes, row-major
    std::vector<int> ops_;           // ops_[i-1] = op of intermediate node i
    bool terminal_ = false;
};

struct CellBlock {
    int left_layer = 0;   // 0 = absent, else 1..12
    int right_layer = 0;
    int left_input = 0;   // 0 = prev cell, 1 = prev-prev cell, i+2 = block i
    int right_input = 0;

    bool operator==(const CellBlock&) const = default;
};

// A NASNet-style state: a normal cell and a reduction cell, each up to five
// blocks of two branches.
class CellArchitecture {
public:
    static CellArchitecture root(const SpaceLimits&) { return {}; }

    const std::vector<CellBlock>& cell(int which) const { return cells_[which]; }
    std::vector<CellBlock>& cell(int which) { return cells_[which]; }

    bool terminal() const { return terminal_; }
    void set_terminal(bool t) { terminal_ = t; }

    // Reference depth of a block: 1 if both inputs come from cell outputs,
    // one more than the deepest referenced block otherwise.
    int block_depth(int which_cell, int block) const;

    // Evaluable form: both cells non-empty and every branch holds a layer.
    // The branch rule keeps the encoding faithful on complete states: a
    // block whose branches are both empty and whose inputs are both 0 would
    // otherwise encode exactly like an absent block slot.
    bool complete() const {
        for (const auto& blocks : cells_) {
            if (blocks.empty()) return false;
            for (const auto& b : blocks) {
                if (b.left_layer == 0 || b.right_layer == 0) return false;
            }
        }
        return true;
    }

    bool operator==(const CellArchitecture& o) const {
        return cells_ == o.cells_;
    }

private:
    std::array<std::vector<CellBlock>, 2> cells_;  // [0]=normal, [1]=reduction
    bool terminal_ = false;
};

using ArchState = std::variant<DagArchitecture, CellArchitecture>;

// ---------------------------------------------------------------------------
// Actions

struct ActTerminate {
    bool operator==(const ActTerminate&) const = default;
};
struct ActAddNode {
    int op;
    bool operator==(const ActAddNode&) const = default;
};
struct ActAddEdge {
    int from, to;
    bool operator==(const ActAddEdge&) const = default;
};
struct ActAddLayer {
    int cell;   // 0 normal, 1 reduction
    int block;
    int side;   // 0 left, 1 right
    int layer;  // 1..12
    bool operator==(const ActAddLayer&) const = default;
};
struct ActNewBlock {
    int cell;
    int left_input, right_input;
    bool operator==(const ActNewBlock&) const = default;
};

using Action =
    std::variant<ActTerminate, ActAddNode, ActAddEdge, ActAddLayer, ActNewBlock>;

std::string action_to_text(const Action& a);
Action action_from_text(const std::string& text);

// ---------------------------------------------------------------------------
// Encoding

// Fixed-length digit vector form of a state. DAG: max_nodes^2 row-major
// adjacency digits followed by max_nodes node-op digits, where the input node
// carries code num_op_types+1 and the output num_op_types+2 (0 = absent).
// Cell: 10 blocks x [left-layer-1, left-layer-2, right-layer-1,
// right-layer-2, left-input, right-input], normal cell first; an absent block
// is all zeros.
struct EncodedArch {
    std::vector<int> digits;

    bool operator==(const EncodedArch&) const = default;
    bool operator<(const EncodedArch& o) const { return digits < o.digits; }

    std::string text() const;  // digits joined by '-'
    static EncodedArch from_text(const std::string& text);
};

std::size_t encoded_length(const SpaceLimits& limits);

EncodedArch encode(const ArchState& state);
ArchState decode(const EncodedArch& enc, const SpaceLimits& limits);

// Largest digit value the encoding can hold; surrogate inputs are scaled by
// this.
int max_digit_value(const SpaceLimits& limits);

// Hamming distance over digit positions. Throws LengthMismatch.
int edit_distance(const EncodedArch& a, const EncodedArch& b);

// ---------------------------------------------------------------------------
// Operations over states

ArchState root_state(const SpaceLimits& limits);
bool is_terminal(const ArchState& state);
bool is_complete(const ArchState& state);

// All actions legal at `state`, in a fixed order: Terminate first, then
// (DAG) AddNode by op code and AddEdge by (i, j); (cell) AddLayer by
// (cell, block, side, layer) and NewBlock by (cell, left, right).
// A terminal state has no actions.
std::vector<Action> enumerate_actions(const ArchState& state,
                                      const SpaceLimits& limits);

bool is_action_legal(const ArchState& state, const Action& action,
                     const SpaceLimits& limits);

// Successor state; the input is not mutated. Throws IllegalAction.
ArchState apply_action(const ArchState& state, const Action& action,
                       const SpaceLimits& limits);

// Violations are data, never exceptions. Bound violations can never appear
// on states reached through legal actions; completeness violations are
// expected on partially built states and only matter at evaluation time.
struct ValidationReport {
    std::vector<std::string> bound_violations;
    std::vector<std::string> completeness_violations;
    bool ok() const {
        return bound_violations.empty() && completeness_violations.empty();
    }
};

ValidationReport validate(const ArchState& state, const SpaceLimits& limits);

// Upper bound for the default simulation depth: enough actions to fully
// specify the largest legal architecture, plus the terminating action.
int default_max_tree_depth(const SpaceLimits& limits);

}  // namespace archsearch
