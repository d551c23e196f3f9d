#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "archsearch/baselines.hpp"
#include "archsearch/session.hpp"

namespace archsearch {

inline constexpr const char* kLibraryVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Trials

// One completed search run. Samples are unique evaluated architectures (the
// engine's dedup rule), which is what every samples-to-target figure counts.
struct TrialTrace {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<TraceEvent> events;
    std::optional<std::int64_t> samples_to_target;
};

// mcts, mcts-nm (surrogate ablated), rs, re, hc, ql.
bool is_known_algorithm(const std::string& name);

// One run of `algorithm` at the given seed. `base.search.seed` is replaced
// by `seed`; `evaluator` must be the evaluator `base.evaluator_spec` names.
// Baseline-only knobs (population, epsilon, ...) stay at their defaults.
TrialTrace run_single_trial(const std::string& algorithm,
                            const SessionConfig& base, std::uint64_t seed,
                            const Evaluator& evaluator);

// Repeated seeded trials: trial i runs at seed base_seed + i and the traces
// come back in seed order. `jobs` bounds the worker threads (1 = inline);
// evaluators are immutable, so trials share one safely.
std::vector<TrialTrace> run_trials(const std::string& algorithm,
                                   const SessionConfig& base,
                                   const Evaluator& evaluator, int trials,
                                   std::uint64_t base_seed, int jobs = 1);

// ---------------------------------------------------------------------------
// Statistics

// Sort-based median: midpoint of the two central order statistics.
double median_of(std::vector<double> values);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

// Quartiles as medians of the lower/upper halves, excluding the central
// element when the count is odd (Moore-McCabe convention).
Quartiles quartiles_of(std::vector<double> values);

struct MannWhitneyResult {
    double u_statistic = 0.0;  // U of the first sample
    double p_value = 1.0;
};

// One-sided test that `a` is stochastically smaller than `b`: normal
// approximation with average ranks, tie-corrected variance and a 0.5
// continuity correction. Throws DegenerateVariance when every value ties.
MannWhitneyResult mann_whitney_less(const std::vector<double>& a,
                                    const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Reports

struct AlgorithmSummary {
    std::string algorithm;
    int trials = 0;
    int reached_target = 0;
    std::optional<Quartiles> samples;  // over trials that reached the target
    // baseline median / this algorithm's median; only when both exist
    std::optional<double> speedup_vs_baseline;
};

struct BenchReport {
    std::string baseline;  // the speedup reference algorithm
    std::vector<AlgorithmSummary> algorithms;  // first-seen order
    std::vector<std::int64_t> index_grid;      // 1..max event count
    // Mean best-so-far per algorithm over the grid; traces that stopped
    // early carry their final best forward.
    std::map<std::string, std::vector<double>> mean_best;
    // Raw samples-to-target per algorithm (reached trials only).
    std::map<std::string, std::vector<double>> samples_reached;
};

BenchReport make_report(const std::vector<TrialTrace>& traces,
                        const std::string& baseline);

// Self-contained static charts (no external assets); byte-stable for a
// given report.
std::string progression_svg(const BenchReport& report);
std::string boxplot_svg(const BenchReport& report);

struct EmitOptions {
    bool svg = false;
    std::string baseline = "rs";
    std::int64_t wall_ms = 0;  // recorded in meta.json only
};

// Writes trials.csv, summary.csv and meta.json (plus the two SVG charts
// when opt.svg) into out_dir, creating it if needed. The data files
// regenerate byte-identically from the same traces; volatile run facts
// (wall time, timestamp) are segregated to meta.json. Throws IoError.
void emit_report(const std::vector<TrialTrace>& traces,
                 const std::string& out_dir, const EmitOptions& opt);

}  // namespace archsearch
