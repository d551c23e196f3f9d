#include "archsearch/space.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "archsearch/util.hpp"

namespace archsearch {

int cell_layer_code(const std::string& name) {
    for (std::size_t i = 0; i < kCellLayerNames.size(); ++i) {
        if (name == kCellLayerNames[i]) return static_cast<int>(i) + 1;
    }
    throw ConfigError("unknown layer name: " + name);
}

// ---------------------------------------------------------------------------
// DagArchitecture

DagArchitecture::DagArchitecture(int max_nodes, int num_op_types)
    : max_nodes_(max_nodes),
      num_op_types_(num_op_types),
      num_nodes_(2),
      adj_(static_cast<std::size_t>(max_nodes) * max_nodes, 0) {
    if (max_nodes < 2) throw ConfigError("max_nodes must be >= 2");
    if (num_op_types < 1) throw ConfigError("num_op_types must be >= 1");
}

void DagArchitecture::add_edge(int i, int j) {
    if (!(0 <= i && i < j && j < num_nodes_))
        throw IllegalAction("edge endpoints out of range");
    auto& cell = adj_[i * max_nodes_ + j];
    if (!cell) {
        cell = 1;
        ++num_edges_;
    }
}

void DagArchitecture::remove_edge(int i, int j) {
    auto& cell = adj_[i * max_nodes_ + j];
    if (cell) {
        cell = 0;
        --num_edges_;
    }
}

void DagArchitecture::set_op(int node, int op_code) {
    ops_.at(node - 1) = op_code;
}

void DagArchitecture::add_node(int op_code) {
    if (num_nodes_ >= max_nodes_) throw IllegalAction("node limit reached");
    const int old_out = num_nodes_ - 1;
    const int new_out = num_nodes_;
    // Edges into the output keep pointing at the output.
    for (int i = 0; i < old_out; ++i) {
        if (adj_[i * max_nodes_ + old_out]) {
            adj_[i * max_nodes_ + old_out] = 0;
            adj_[i * max_nodes_ + new_out] = 1;
        }
    }
    ops_.push_back(op_code);
    ++num_nodes_;
}

void DagArchitecture::remove_node(int node) {
    if (!(1 <= node && node <= num_nodes_ - 2))
        throw IllegalAction("only intermediate nodes can be removed");
    std::vector<std::uint8_t> next(adj_.size(), 0);
    int edges = 0;
    for (int i = 0; i < num_nodes_; ++i) {
        if (i == node) continue;
        for (int j = i + 1; j < num_nodes_; ++j) {
            if (j == node || !adj_[i * max_nodes_ + j]) continue;
            const int ni = i > node ? i - 1 : i;
            const int nj = j > node ? j - 1 : j;
            next[ni * max_nodes_ + nj] = 1;
            ++edges;
        }
    }
    adj_ = std::move(next);
    num_edges_ = edges;
    ops_.erase(ops_.begin() + (node - 1));
    --num_nodes_;
}

bool DagArchitecture::complete() const {
    const int n = num_nodes_;
    std::vector<char> fwd(n, 0), bwd(n, 0);
    fwd[0] = 1;
    for (int j = 1; j < n; ++j) {
        for (int i = 0; i < j; ++i) {
            if (fwd[i] && adj_[i * max_nodes_ + j]) {
                fwd[j] = 1;
                break;
            }
        }
    }
    if (!fwd[n - 1]) return false;
    bwd[n - 1] = 1;
    for (int i = n - 2; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) {
            if (bwd[j] && adj_[i * max_nodes_ + j]) {
                bwd[i] = 1;
                break;
            }
        }
    }
    for (int k = 1; k < n - 1; ++k) {
        if (!fwd[k] || !bwd[k]) return false;
    }
    return true;
}

std::optional<int> DagArchitecture::longest_path() const {
    const int n = num_nodes_;
    std::vector<std::optional<int>> dist(n);
    dist[0] = 0;
    for (int j = 1; j < n; ++j) {
        for (int i = 0; i < j; ++i) {
            if (dist[i] && adj_[i * max_nodes_ + j]) {
                int cand = *dist[i] + 1;
                if (!dist[j] || cand > *dist[j]) dist[j] = cand;
            }
        }
    }
    return dist[n - 1];
}

// ---------------------------------------------------------------------------
// CellArchitecture

int CellArchitecture::block_depth(int which_cell, int block) const {
    const auto& blocks = cells_[which_cell];
    const CellBlock& b = blocks[block];
    int depth = 1;
    for (int input : {b.left_input, b.right_input}) {
        if (input >= 2) {
            depth = std::max(depth, 1 + block_depth(which_cell, input - 2));
        }
    }
    return depth;
}

// ---------------------------------------------------------------------------
// Actions

std::string action_to_text(const Action& a) {
    std::ostringstream os;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ActTerminate>) {
                os << "terminate";
            } else if constexpr (std::is_same_v<T, ActAddNode>) {
                os << "add-node:" << v.op;
            } else if constexpr (std::is_same_v<T, ActAddEdge>) {
                os << "add-edge:" << v.from << "-" << v.to;
            } else if constexpr (std::is_same_v<T, ActAddLayer>) {
                os << "add-layer:" << (v.cell == 0 ? 'N' : 'R') << ":" << v.block
                   << ":" << (v.side == 0 ? 'L' : 'R') << ":" << v.layer;
            } else {
                os << "new-block:" << (v.cell == 0 ? 'N' : 'R') << ":"
                   << v.left_input << ":" << v.right_input;
            }
        },
        a);
    return os.str();
}

Action action_from_text(const std::string& text) {
    auto bad = [&] { return InvalidEncoding("bad action text: " + text); };
    if (text == "terminate") return ActTerminate{};
    auto parts = split(text, ':');
    auto to_int = [&](const std::string& s) {
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw bad();
        return v;
    };
    if (parts[0] == "add-node" && parts.size() == 2)
        return ActAddNode{to_int(parts[1])};
    if (parts[0] == "add-edge" && parts.size() == 2) {
        auto ij = split(parts[1], '-');
        if (ij.size() != 2) throw bad();
        return ActAddEdge{to_int(ij[0]), to_int(ij[1])};
    }
    if (parts[0] == "add-layer" && parts.size() == 5) {
        return ActAddLayer{parts[1] == "N" ? 0 : 1, to_int(parts[2]),
                           parts[3] == "L" ? 0 : 1, to_int(parts[4])};
    }
    if (parts[0] == "new-block" && parts.size() == 4) {
        return ActNewBlock{parts[1] == "N" ? 0 : 1, to_int(parts[2]),
                           to_int(parts[3])};
    }
    throw bad();
}

// ---------------------------------------------------------------------------
// Encoding

std::string EncodedArch::text() const {
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i) out += '-';
        out += std::to_string(digits[i]);
    }
    return out;
}

EncodedArch EncodedArch::from_text(const std::string& text) {
    EncodedArch enc;
    for (const auto& tok : split(text, '-')) {
        int v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size() || v < 0)
            throw InvalidEncoding("bad digit '" + tok + "' in encoding");
        enc.digits.push_back(v);
    }
    return enc;
}

std::size_t encoded_length(const SpaceLimits& limits) {
    if (limits.domain == Domain::dag) {
        return static_cast<std::size_t>(limits.max_nodes) * limits.max_nodes +
               limits.max_nodes;
    }
    return 60;
}

int max_digit_value(const SpaceLimits& limits) {
    if (limits.domain == Domain::dag) return limits.num_op_types + 2;
    return limits.num_layer_types;
}

namespace {

EncodedArch encode_dag(const DagArchitecture& s) {
    const int mn = s.max_nodes();
    EncodedArch enc;
    enc.digits.assign(static_cast<std::size_t>(mn) * mn + mn, 0);
    for (int i = 0; i < s.num_nodes(); ++i) {
        for (int j = i + 1; j < s.num_nodes(); ++j) {
            if (s.edge(i, j)) enc.digits[i * mn + j] = 1;
        }
    }
    const int base = mn * mn;
    enc.digits[base + 0] = s.num_op_types() + 1;
    enc.digits[base + s.num_nodes() - 1] = s.num_op_types() + 2;
    for (int k = 1; k < s.num_nodes() - 1; ++k) {
        enc.digits[base + k] = s.op(k);
    }
    return enc;
}

EncodedArch encode_cell(const CellArchitecture& s) {
    EncodedArch enc;
    enc.digits.assign(60, 0);
    for (int c = 0; c < 2; ++c) {
        const auto& blocks = s.cell(c);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::size_t off = (c * 5 + b) * 6;
            enc.digits[off + 0] = blocks[b].left_layer;
            // slots 1 and 3 are the second layer of each branch, unused while
            // branches hold at most one layer
            enc.digits[off + 2] = blocks[b].right_layer;
            enc.digits[off + 4] = blocks[b].left_input;
            enc.digits[off + 5] = blocks[b].right_input;
        }
    }
    return enc;
}

DagArchitecture decode_dag(const EncodedArch& enc, const SpaceLimits& limits) {
    const int mn = limits.max_nodes;
    if (enc.digits.size() != encoded_length(limits))
        throw InvalidEncoding("encoding length mismatch");
    const int base = mn * mn;
    const int in_code = limits.num_op_types + 1;
    const int out_code = limits.num_op_types + 2;
    if (enc.digits[base] != in_code)
        throw InvalidEncoding("input node code missing");
    int out_idx = -1;
    for (int i = 1; i < mn; ++i) {
        if (enc.digits[base + i] == out_code) {
            if (out_idx != -1) throw InvalidEncoding("duplicate output node");
            out_idx = i;
        }
    }
    if (out_idx < 0) throw InvalidEncoding("output node code missing");

    DagArchitecture s(mn, limits.num_op_types);
    for (int k = 1; k < out_idx; ++k) {
        const int op = enc.digits[base + k];
        if (op < 1 || op > limits.num_op_types)
            throw InvalidEncoding("bad op digit at node " + std::to_string(k));
        s.add_node(op);
    }
    for (int i = out_idx + 1; i < mn; ++i) {
        if (enc.digits[base + i] != 0)
            throw InvalidEncoding("digit after output node");
    }
    for (int i = 0; i < mn; ++i) {
        for (int j = 0; j < mn; ++j) {
            const int d = enc.digits[i * mn + j];
            if (d == 0) continue;
            if (d != 1) throw InvalidEncoding("adjacency digit not 0/1");
            if (!(i < j && j <= out_idx))
                throw InvalidEncoding("edge outside upper triangle");
            s.add_edge(i, j);
        }
    }
    return s;
}

CellArchitecture decode_cell(const EncodedArch& enc, const SpaceLimits& limits) {
    if (enc.digits.size() != 60) throw InvalidEncoding("encoding length mismatch");
    CellArchitecture s;
    for (int c = 0; c < 2; ++c) {
        bool seen_absent = false;
        for (int b = 0; b < 5; ++b) {
            const std::size_t off = (c * 5 + b) * 6;
            bool absent = true;
            for (int d = 0; d < 6; ++d) absent &= enc.digits[off + d] == 0;
            if (absent) {
                seen_absent = true;
                continue;
            }
            if (seen_absent)
                throw InvalidEncoding("block after an absent block slot");
            CellBlock blk;
            blk.left_layer = enc.digits[off + 0];
            blk.right_layer = enc.digits[off + 2];
            blk.left_input = enc.digits[off + 4];
            blk.right_input = enc.digits[off + 5];
            if (enc.digits[off + 1] != 0 || enc.digits[off + 3] != 0)
                throw InvalidEncoding("second-layer digit in use");
            for (int lay : {blk.left_layer, blk.right_layer}) {
                if (lay < 0 || lay > limits.num_layer_types)
                    throw InvalidEncoding("layer code out of range");
            }
            for (int in : {blk.left_input, blk.right_input}) {
                if (in < 0 || in >= b + 2)
                    throw InvalidEncoding("block input references a later block");
            }
            s.cell(c).push_back(blk);
        }
    }
    return s;
}

}  // namespace

EncodedArch encode(const ArchState& state) {
    if (const auto* dag = std::get_if<DagArchitecture>(&state))
        return encode_dag(*dag);
    return encode_cell(std::get<CellArchitecture>(state));
}

ArchState decode(const EncodedArch& enc, const SpaceLimits& limits) {
    if (limits.domain == Domain::dag) return decode_dag(enc, limits);
    return decode_cell(enc, limits);
}

int edit_distance(const EncodedArch& a, const EncodedArch& b) {
    if (a.digits.size() != b.digits.size())
        throw LengthMismatch("encodings differ in length");
    int d = 0;
    for (std::size_t i = 0; i < a.digits.size(); ++i) {
        d += a.digits[i] != b.digits[i];
    }
    return d;
}

// ---------------------------------------------------------------------------
// State operations

ArchState root_state(const SpaceLimits& limits) {
    if (limits.domain == Domain::dag)
        return DagArchitecture::root(limits);
    return CellArchitecture::root(limits);
}

bool is_terminal(const ArchState& state) {
    return std::visit([](const auto& s) { return s.terminal(); }, state);
}

bool is_complete(const ArchState& state) {
    return std::visit([](const auto& s) { return s.complete(); }, state);
}

namespace {

void dag_actions(const DagArchitecture& s, const SpaceLimits& limits,
                 std::vector<Action>& out) {
    if (s.num_nodes() < limits.max_nodes) {
        for (int op = 1; op <= limits.num_op_types; ++op)
            out.push_back(ActAddNode{op});
    }
    const int edge_cap = limits.max_edges.value_or(
        limits.max_nodes * (limits.max_nodes - 1) / 2);
    if (s.num_edges() < edge_cap) {
        for (int i = 0; i < s.num_nodes(); ++i) {
            for (int j = i + 1; j < s.num_nodes(); ++j) {
                if (!s.edge(i, j)) out.push_back(ActAddEdge{i, j});
            }
        }
    }
}

void cell_actions(const CellArchitecture& s, const SpaceLimits& limits,
                  std::vector<Action>& out) {
    for (int c = 0; c < 2; ++c) {
        const auto& blocks = s.cell(c);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            for (int side = 0; side < 2; ++side) {
                const int present =
                    side == 0 ? blocks[b].left_layer : blocks[b].right_layer;
                if (present != 0) continue;  // a branch holds at most one layer
                for (int lay = 1; lay <= limits.num_layer_types; ++lay) {
                    out.push_back(
                        ActAddLayer{c, static_cast<int>(b), side, lay});
                }
            }
        }
    }
    for (int c = 0; c < 2; ++c) {
        const auto& blocks = s.cell(c);
        if (static_cast<int>(blocks.size()) >= limits.max_blocks) continue;
        // A new block may reference a prior block only if that keeps the
        // reference chain within the depth limit.
        std::vector<int> inputs{0, 1};
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (1 + s.block_depth(c, static_cast<int>(b)) <=
                limits.block_depth_limit) {
                inputs.push_back(static_cast<int>(b) + 2);
            }
        }
        for (int li : inputs) {
            for (int ri : inputs) {
                out.push_back(ActNewBlock{c, li, ri});
            }
        }
    }
}

}  // namespace

std::vector<Action> enumerate_actions(const ArchState& state,
                                      const SpaceLimits& limits) {
    std::vector<Action> out;
    if (is_terminal(state)) return out;
    out.push_back(ActTerminate{});
    if (const auto* dag = std::get_if<DagArchitecture>(&state)) {
        dag_actions(*dag, limits, out);
    } else {
        cell_actions(std::get<CellArchitecture>(state), limits, out);
    }
    return out;
}

bool is_action_legal(const ArchState& state, const Action& action,
                     const SpaceLimits& limits) {
    const auto actions = enumerate_actions(state, limits);
    return std::find(actions.begin(), actions.end(), action) != actions.end();
}

ArchState apply_action(const ArchState& state, const Action& action,
                       const SpaceLimits& limits) {
    if (!is_action_legal(state, action, limits))
        throw IllegalAction("action not legal here: " + action_to_text(action));
    ArchState next = state;
    std::visit(
        [&](const auto& act) {
            using T = std::decay_t<decltype(act)>;
            if constexpr (std::is_same_v<T, ActTerminate>) {
                std::visit([](auto& s) { s.set_terminal(true); }, next);
            } else if constexpr (std::is_same_v<T, ActAddNode>) {
                std::get<DagArchitecture>(next).add_node(act.op);
            } else if constexpr (std::is_same_v<T, ActAddEdge>) {
                std::get<DagArchitecture>(next).add_edge(act.from, act.to);
            } else if constexpr (std::is_same_v<T, ActAddLayer>) {
                auto& s = std::get<CellArchitecture>(next);
                auto& blk = s.cell(act.cell)[act.block];
                (act.side == 0 ? blk.left_layer : blk.right_layer) = act.layer;
            } else {
                auto& s = std::get<CellArchitecture>(next);
                s.cell(act.cell).push_back(
                    CellBlock{0, 0, act.left_input, act.right_input});
            }
        },
        action);
    return next;
}

ValidationReport validate(const ArchState& state, const SpaceLimits& limits) {
    ValidationReport rep;
    if (const auto* dag = std::get_if<DagArchitecture>(&state)) {
        if (dag->num_nodes() > limits.max_nodes)
            rep.bound_violations.push_back("node count exceeds max_nodes");
        if (limits.max_edges && dag->num_edges() > *limits.max_edges)
            rep.bound_violations.push_back("edge count exceeds limit");
        const int n = dag->num_nodes();
        std::vector<char> fwd(n, 0), bwd(n, 0);
        fwd[0] = 1;
        for (int j = 1; j < n; ++j)
            for (int i = 0; i < j; ++i)
                if (fwd[i] && dag->edge(i, j)) fwd[j] = 1;
        bwd[n - 1] = 1;
        for (int i = n - 2; i >= 0; --i)
            for (int j = i + 1; j < n; ++j)
                if (bwd[j] && dag->edge(i, j)) bwd[i] = 1;
        if (!fwd[n - 1])
            rep.completeness_violations.push_back("no input-output path");
        for (int k = 1; k < n - 1; ++k) {
            if (!fwd[k] || !bwd[k])
                rep.completeness_violations.push_back(
                    "node " + std::to_string(k) +
                    " not on any input-output path");
        }
    } else {
        const auto& s = std::get<CellArchitecture>(state);
        for (int c = 0; c < 2; ++c) {
            const char* name = c == 0 ? "normal" : "reduction";
            const auto& blocks = s.cell(c);
            if (static_cast<int>(blocks.size()) > limits.max_blocks)
                rep.bound_violations.push_back(std::string(name) +
                                               " cell exceeds block limit");
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                for (int lay : {blocks[b].left_layer, blocks[b].right_layer}) {
                    if (lay < 0 || lay > limits.num_layer_types)
                        rep.bound_violations.push_back("layer code out of range");
                }
                for (int in : {blocks[b].left_input, blocks[b].right_input}) {
                    if (in < 0 || in >= static_cast<int>(b) + 2)
                        rep.bound_violations.push_back("block input out of range");
                }
                if (s.block_depth(c, static_cast<int>(b)) >
                    limits.block_depth_limit)
                    rep.bound_violations.push_back(
                        "block reference chain too deep");
            }
            if (blocks.empty()) {
                rep.completeness_violations.push_back(std::string(name) +
                                                      " cell is empty");
                continue;
            }
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                if (blocks[b].left_layer == 0)
                    rep.completeness_violations.push_back(
                        std::string(name) + " cell block " + std::to_string(b) +
                        " left branch is empty");
                if (blocks[b].right_layer == 0)
                    rep.completeness_violations.push_back(
                        std::string(name) + " cell block " + std::to_string(b) +
                        " right branch is empty");
            }
        }
    }
    return rep;
}

int default_max_tree_depth(const SpaceLimits& limits) {
    if (limits.domain == Domain::dag) {
        const int edges = limits.max_edges.value_or(
            limits.max_nodes * (limits.max_nodes - 1) / 2);
        return (limits.max_nodes - 2) + edges + 2;
    }
    return 2 * limits.max_blocks * 3 + 2;
}

}  // namespace archsearch
