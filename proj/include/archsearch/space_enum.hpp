#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "archsearch/space.hpp"

namespace archsearch {

// Upper bound on the number of candidate states the exhaustive enumerator
// would visit (all edge subsets times all op assignments, before the
// completeness filter).
std::uint64_t estimate_space_size(const SpaceLimits& limits);

inline constexpr std::uint64_t kDefaultEnumerationCap = 20'000'000;

struct EnumerateOptions {
    std::uint64_t cap = kDefaultEnumerationCap;
    // Collapse states whose graphs are isomorphic under an
    // iterated-neighborhood-label canonical hash. Off by default: the
    // benchmark methodology counts distinct encodings.
    bool dedup_isomorphic = false;
};

// Yields every distinct complete legal DAG state exactly once, in a fixed
// deterministic order (ascending node count, then adjacency mask, then op
// assignment). Throws SpaceTooLarge when the estimate exceeds the cap, and
// ConfigError for the cell domain (no exhaustive cell enumeration).
void enumerate_space(const SpaceLimits& limits, const EnumerateOptions& opts,
                     const std::function<void(const DagArchitecture&)>& yield);

std::vector<DagArchitecture> enumerate_space_vec(
    const SpaceLimits& limits, const EnumerateOptions& opts = {});

// Canonical hash used by the isomorphism dedup: iterated hashing of
// (node label, in-neighbor labels, out-neighbor labels) multisets.
std::uint64_t canonical_graph_hash(const DagArchitecture& s);

}  // namespace archsearch
