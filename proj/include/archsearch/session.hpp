#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "archsearch/evaluator.hpp"
#include "archsearch/mcts.hpp"
#include "archsearch/rng.hpp"
#include "archsearch/space.hpp"
#include "archsearch/surrogate.hpp"

namespace archsearch {

// Everything a run needs, fixed up front. One struct serves the sequential
// runner and the master; a snapshot embeds it so resume needs no flags.
struct SessionConfig {
    SpaceLimits limits;
    SearchConfig search;
    SurrogateConfig surrogate;  // consulted when search.meta_dnn_enabled
    std::string evaluator_spec = "synthetic:0";

    std::uint64_t budget = 100;  // unique true evaluations
    std::optional<double> target_accuracy;
    double target_tolerance = 0.0;

    // Hard iteration valve so exhausted spaces cannot spin forever on cache
    // hits; 0 resolves to 1000 x budget.
    std::uint64_t max_iterations = 0;

    int retrain_every = 1;   // applied results per surrogate fit
    int snapshot_every = 0;  // unique evaluations between snapshots; 0 = off
    std::string snapshot_path;

    TransferCostModel cost;
};

// Canonical "key=value;..." rendering of a config; its FNV-1a hash is the
// config hash recorded in reports.
std::string config_fingerprint(const SessionConfig& cfg);
std::uint64_t config_hash(const SessionConfig& cfg);

// A dispatched evaluation job (the wire-level unit of work). Multiple engine
// outcomes that sampled the same architecture while it was in flight share
// one wire job.
struct WireJob {
    std::uint64_t id = 0;
    EncodedArch encoding;
    std::optional<EncodedArch> parent_encoding;  // transfer source, if any
    bool from_transfer = false;
};

// One unique true evaluation, in completion order.
struct TraceEvent {
    std::int64_t unique_eval_index = 0;  // 1-based
    EncodedArch encoding;
    double accuracy = 0.0;
    double best_so_far = 0.0;
    std::int64_t cumulative_cost_epochs = 0;
};

// Orchestrates one search run: owns the engine, the surrogate, the run RNG,
// the cost ledger and the trace. The sequential runner and the distributed
// master drive it through the same two calls — next_job / complete_job — so
// a one-worker synchronous run is the sequential algorithm by construction.
class SearchSession {
public:
    explicit SearchSession(const SessionConfig& cfg);

    // Upper bound on jobs in flight. The sequential driver keeps the default
    // of 1; the master sets the queue bound (2 x workers by default).
    void set_capacity(int max_inflight);

    // Runs search iterations until a job needs dispatching, capacity is
    // full, or the run is finished. nullopt = nothing to dispatch now.
    std::optional<WireJob> next_job();

    // Applies a completed evaluation: corrective backprop for every engine
    // outcome coalesced under the job, ledger/trace bookkeeping and the
    // surrogate retrain cadence. Throws UnknownOutcome for foreign ids.
    void complete_job(std::uint64_t wire_id, double accuracy);

    bool is_inflight(std::uint64_t wire_id) const {
        return inflight_.find(wire_id) != inflight_.end();
    }
    std::size_t inflight_count() const { return inflight_.size(); }

    // In-flight wire jobs in id order; a master resuming from a snapshot
    // re-dispatches these.
    std::vector<WireJob> inflight_jobs() const {
        std::vector<WireJob> jobs;
        jobs.reserve(inflight_.size());
        for (const auto& [id, rec] : inflight_) jobs.push_back(rec.job);
        return jobs;
    }

    // True once no further jobs will be issued; the run is over when this
    // holds and the in-flight set has drained.
    bool finished() const;
    bool done() const { return finished() && inflight_.empty(); }

    // Sequential driver: evaluate every job locally, snapshot on cadence.
    void run_to_completion(const Evaluator& evaluator);

    // ------------------------------------------------------------------
    // Introspection

    const SessionConfig& config() const { return cfg_; }
    const MctsEngine& engine() const { return *engine_; }
    MctsEngine& engine() { return *engine_; }
    Surrogate* surrogate() { return surrogate_.get(); }
    const Surrogate* surrogate() const { return surrogate_.get(); }
    Rng& rng() { return rng_; }
    const Rng& rng() const { return rng_; }

    std::int64_t unique_evaluations() const { return unique_; }
    std::uint64_t iterations() const { return engine_->iterations(); }
    const CostLedger& ledger() const { return ledger_; }
    const std::vector<TraceEvent>& events() const { return events_; }
    double best_accuracy() const { return best_accuracy_; }
    const std::optional<EncodedArch>& best_encoding() const {
        return best_encoding_;
    }
    // 1-based index of the first evaluation reaching the target; nullopt
    // when no target is set or it was never reached.
    std::optional<std::int64_t> samples_to_target() const;

    // ------------------------------------------------------------------
    // Snapshots: single-line versioned JSON plus a trailing checksum line,
    // written atomically. Restoring reproduces the exact state, including
    // the RNG position; in-flight jobs are re-dispatched by next_job.
    void save_snapshot(const std::string& path) const;
    static SearchSession restore_snapshot(const std::string& path);

    // Resume support: lift the budget of a restored session.
    void set_budget(std::uint64_t budget) { cfg_.budget = budget; }

    // Cadence write: saves to the configured snapshot path whenever the
    // unique-evaluation count hits a multiple of snapshot_every.
    void maybe_snapshot();

private:
    struct Inflight {
        WireJob job;
        std::vector<std::uint64_t> engine_jobs;
    };

    bool target_reached() const;
    std::uint64_t iteration_cap() const;
    std::string to_snapshot_json() const;
    void load_snapshot_json(const std::string& text);

    SessionConfig cfg_;
    Rng rng_;
    std::unique_ptr<Surrogate> surrogate_;  // null when the meta-DNN is off
    std::unique_ptr<MctsEngine> engine_;

    int capacity_ = 1;
    std::uint64_t next_wire_id_ = 1;
    std::map<std::uint64_t, Inflight> inflight_;
    std::map<EncodedArch, std::uint64_t> inflight_by_arch_;

    std::int64_t unique_ = 0;
    int since_fit_ = 0;
    CostLedger ledger_;
    std::vector<TraceEvent> events_;
    double best_accuracy_ = 0.0;
    std::optional<EncodedArch> best_encoding_;
};

}  // namespace archsearch
