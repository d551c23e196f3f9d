#include "archsearch/space_enum.hpp"

#include <algorithm>
#include <bit>
#include <set>
#include <string>

#include "archsearch/util.hpp"

namespace archsearch {

std::uint64_t estimate_space_size(const SpaceLimits& limits) {
    if (limits.domain != Domain::dag)
        throw ConfigError("space estimation is defined for the DAG domain");
    std::uint64_t total = 0;
    for (int n = 2; n <= limits.max_nodes; ++n) {
        const int pairs = n * (n - 1) / 2;
        if (pairs >= 63) return UINT64_MAX;
        std::uint64_t masks = 1ULL << pairs;
        std::uint64_t ops = 1;
        for (int k = 0; k < n - 2; ++k) {
            if (ops > UINT64_MAX / limits.num_op_types) return UINT64_MAX;
            ops *= limits.num_op_types;
        }
        if (masks > UINT64_MAX / ops) return UINT64_MAX;
        total += masks * ops;
    }
    return total;
}

std::uint64_t canonical_graph_hash(const DagArchitecture& s) {
    const int n = s.num_nodes();
    // Initial labels: op code with reserved values for input/output.
    std::vector<std::uint64_t> label(n);
    label[0] = fnv1a64("in");
    label[n - 1] = fnv1a64("out");
    for (int k = 1; k < n - 1; ++k) {
        const std::string t = "op" + std::to_string(s.op(k));
        label[k] = fnv1a64(t);
    }
    for (int round = 0; round < n; ++round) {
        std::vector<std::uint64_t> next(n);
        for (int v = 0; v < n; ++v) {
            std::vector<std::uint64_t> in_l, out_l;
            for (int u = 0; u < v; ++u)
                if (s.edge(u, v)) in_l.push_back(label[u]);
            for (int w = v + 1; w < n; ++w)
                if (s.edge(v, w)) out_l.push_back(label[w]);
            std::sort(in_l.begin(), in_l.end());
            std::sort(out_l.begin(), out_l.end());
            std::uint64_t h = fnv1a64_bytes(&label[v], sizeof label[v]);
            for (auto x : in_l) h = fnv1a64_bytes(&x, sizeof x, h);
            h = fnv1a64("|", h);
            for (auto x : out_l) h = fnv1a64_bytes(&x, sizeof x, h);
            next[v] = h;
        }
        label = std::move(next);
    }
    std::sort(label.begin(), label.end());
    std::uint64_t h = fnv1a64_bytes(&n, sizeof n);
    for (auto x : label) h = fnv1a64_bytes(&x, sizeof x, h);
    return h;
}

void enumerate_space(const SpaceLimits& limits, const EnumerateOptions& opts,
                     const std::function<void(const DagArchitecture&)>& yield) {
    if (limits.domain != Domain::dag)
        throw ConfigError("exhaustive enumeration is defined for the DAG domain");
    const std::uint64_t est = estimate_space_size(limits);
    if (est > opts.cap)
        throw SpaceTooLarge("estimated " + std::to_string(est) +
                            " candidates exceeds cap " +
                            std::to_string(opts.cap));

    const int edge_cap = limits.max_edges.value_or(
        limits.max_nodes * (limits.max_nodes - 1) / 2);
    std::set<std::uint64_t> seen_iso;

    for (int n = 2; n <= limits.max_nodes; ++n) {
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
        const std::uint64_t masks = 1ULL << pairs.size();
        for (std::uint64_t mask = 0; mask < masks; ++mask) {
            if (static_cast<int>(std::popcount(mask)) > edge_cap) continue;
            DagArchitecture base(limits.max_nodes, limits.num_op_types);
            for (int k = 0; k < n - 2; ++k) base.add_node(1);
            for (std::size_t t = 0; t < pairs.size(); ++t) {
                if (mask >> t & 1) base.add_edge(pairs[t].first, pairs[t].second);
            }
            if (!base.complete()) continue;
            // All op assignments over the intermediates, odometer-style.
            std::vector<int> ops(std::max(0, n - 2), 1);
            while (true) {
                for (int k = 0; k < n - 2; ++k) base.set_op(k + 1, ops[k]);
                if (opts.dedup_isomorphic) {
                    if (seen_iso.insert(canonical_graph_hash(base)).second)
                        yield(base);
                } else {
                    yield(base);
                }
                int pos = static_cast<int>(ops.size()) - 1;
                while (pos >= 0 && ops[pos] == limits.num_op_types) {
                    ops[pos] = 1;
                    --pos;
                }
                if (pos < 0) break;
                ++ops[pos];
            }
        }
    }
}

std::vector<DagArchitecture> enumerate_space_vec(const SpaceLimits& limits,
                                                 const EnumerateOptions& opts) {
    std::vector<DagArchitecture> out;
    enumerate_space(limits, opts,
                    [&](const DagArchitecture& s) { out.push_back(s); });
    return out;
}

}  // namespace archsearch
