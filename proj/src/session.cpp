#include "archsearch/session.hpp"

#include <json.hpp>

#include <utility>

#include "archsearch/util.hpp"

namespace archsearch {

using nlohmann::json;

namespace {

std::string domain_name(Domain d) {
    return d == Domain::dag ? "dag" : "cell";
}

}  // namespace

std::string config_fingerprint(const SessionConfig& cfg) {
    std::string s;
    s += "domain=" + domain_name(cfg.limits.domain);
    s += ";max_nodes=" + std::to_string(cfg.limits.max_nodes);
    s += ";num_op_types=" + std::to_string(cfg.limits.num_op_types);
    s += ";max_edges=" + (cfg.limits.max_edges
                              ? std::to_string(*cfg.limits.max_edges)
                              : std::string("-"));
    s += ";max_blocks=" + std::to_string(cfg.limits.max_blocks);
    s += ";num_layer_types=" + std::to_string(cfg.limits.num_layer_types);
    s += ";max_layers_per_branch=" +
         std::to_string(cfg.limits.max_layers_per_branch);
    s += ";block_depth_limit=" + std::to_string(cfg.limits.block_depth_limit);
    s += ";c=" + format_double(cfg.search.c);
    s += ";k=" + std::to_string(cfg.search.k);
    s += ";max_tree_depth=" + std::to_string(cfg.search.max_tree_depth);
    s += ";seed=" + std::to_string(cfg.search.seed);
    s += ";meta_dnn=" + std::string(cfg.search.meta_dnn_enabled ? "1" : "0");
    s += ";hidden=";
    for (std::size_t i = 0; i < cfg.surrogate.hidden_dims.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(cfg.surrogate.hidden_dims[i]);
    }
    s += ";multi_stage=" + std::string(cfg.surrogate.multi_stage ? "1" : "0");
    s += ";bins=" + std::to_string(cfg.surrogate.bins);
    s += ";epochs=" + std::to_string(cfg.surrogate.train.epochs);
    s += ";batch=" + std::to_string(cfg.surrogate.train.batch_size);
    s += ";lr=" + format_double(cfg.surrogate.train.learning_rate);
    s += ";beta1=" + format_double(cfg.surrogate.train.beta1);
    s += ";beta2=" + format_double(cfg.surrogate.train.beta2);
    s += ";adam_eps=" + format_double(cfg.surrogate.train.adam_epsilon);
    s += ";retrain_scratch=" +
         std::string(cfg.surrogate.retrain_from_scratch ? "1" : "0");
    s += ";evaluator=" + cfg.evaluator_spec;
    s += ";budget=" + std::to_string(cfg.budget);
    s += ";target=" + (cfg.target_accuracy
                           ? format_double(*cfg.target_accuracy)
                           : std::string("-"));
    s += ";tolerance=" + format_double(cfg.target_tolerance);
    s += ";max_iterations=" + std::to_string(cfg.max_iterations);
    s += ";retrain_every=" + std::to_string(cfg.retrain_every);
    s += ";snapshot_every=" + std::to_string(cfg.snapshot_every);
    s += ";cost=" + std::to_string(cfg.cost.full_epochs) + "/" +
         std::to_string(cfg.cost.transfer_epochs);
    return s;
}

std::uint64_t config_hash(const SessionConfig& cfg) {
    return fnv1a64(config_fingerprint(cfg));
}

// ---------------------------------------------------------------------------
// Session core

SearchSession::SearchSession(const SessionConfig& cfg)
    : cfg_(cfg), rng_(cfg.search.seed) {
    if (cfg_.retrain_every < 1) {
        throw ConfigError("retrain_every must be >= 1");
    }
    if (cfg_.snapshot_every < 0) {
        throw ConfigError("snapshot_every must be >= 0");
    }
    if (cfg_.target_accuracy &&
        (*cfg_.target_accuracy < 0.0 || *cfg_.target_accuracy > 1.0)) {
        throw ConfigError("target accuracy must lie in [0,1]");
    }
    if (cfg_.search.meta_dnn_enabled) {
        surrogate_ =
            std::make_unique<Surrogate>(cfg_.limits, cfg_.surrogate, rng_);
    }
    engine_ = std::make_unique<MctsEngine>(cfg_.limits, cfg_.search,
                                           surrogate_.get());
}

void SearchSession::set_capacity(int max_inflight) {
    if (max_inflight < 1) throw ConfigError("capacity must be >= 1");
    capacity_ = max_inflight;
}

bool SearchSession::target_reached() const {
    return cfg_.target_accuracy && unique_ > 0 &&
           best_accuracy_ >= *cfg_.target_accuracy - cfg_.target_tolerance;
}

std::uint64_t SearchSession::iteration_cap() const {
    if (cfg_.max_iterations > 0) return cfg_.max_iterations;
    const std::uint64_t by_budget = cfg_.budget * 1000ULL;
    return by_budget > 0 ? by_budget : 1;
}

bool SearchSession::finished() const {
    if (target_reached()) return true;
    if (static_cast<std::uint64_t>(unique_) + inflight_.size() >= cfg_.budget)
        return true;
    return engine_->iterations() >= iteration_cap();
}

std::optional<WireJob> SearchSession::next_job() {
    while (!finished() &&
           inflight_.size() < static_cast<std::size_t>(capacity_)) {
        const SimulationOutcome out = engine_->search_iteration(rng_);
        if (!out.needs_evaluation) continue;  // cache reuse or dead end

        const auto in_flight = inflight_by_arch_.find(out.sampled_arch);
        if (in_flight != inflight_by_arch_.end()) {
            // Same architecture already dispatched: piggyback this outcome
            // on the wire job instead of issuing a duplicate.
            inflight_.at(in_flight->second).engine_jobs.push_back(out.job_id);
            continue;
        }

        WireJob job;
        job.id = next_wire_id_++;
        job.encoding = out.sampled_arch;
        const auto parent = engine_->transfer_parent_of(out.rollout_from);
        if (parent) {
            job.parent_encoding = parent->first;
            job.from_transfer = true;
        }
        inflight_by_arch_[job.encoding] = job.id;
        inflight_.emplace(job.id, Inflight{job, {out.job_id}});
        return job;
    }
    return std::nullopt;
}

void SearchSession::complete_job(std::uint64_t wire_id, double accuracy) {
    const auto it = inflight_.find(wire_id);
    if (it == inflight_.end()) {
        throw UnknownOutcome("no in-flight job " + std::to_string(wire_id));
    }
    const Inflight rec = std::move(it->second);
    inflight_.erase(it);
    inflight_by_arch_.erase(rec.job.encoding);

    for (const std::uint64_t engine_job : rec.engine_jobs) {
        engine_->apply_result(engine_job, accuracy);
    }

    ++unique_;
    ledger_.record(make_evaluation(accuracy, rec.job.from_transfer, cfg_.cost));
    if (!best_encoding_ || accuracy > best_accuracy_) {
        best_accuracy_ = accuracy;
        best_encoding_ = rec.job.encoding;
    }
    events_.push_back(TraceEvent{unique_, rec.job.encoding, accuracy,
                                 best_accuracy_, ledger_.epochs});

    if (surrogate_) {
        if (++since_fit_ >= cfg_.retrain_every) {
            surrogate_->fit(rng_);
            since_fit_ = 0;
        }
    }
}

std::optional<std::int64_t> SearchSession::samples_to_target() const {
    if (!cfg_.target_accuracy) return std::nullopt;
    const double bar = *cfg_.target_accuracy - cfg_.target_tolerance;
    for (const TraceEvent& e : events_) {
        if (e.best_so_far >= bar) return e.unique_eval_index;
    }
    return std::nullopt;
}

void SearchSession::maybe_snapshot() {
    if (cfg_.snapshot_every <= 0 || cfg_.snapshot_path.empty()) return;
    if (unique_ > 0 && unique_ % cfg_.snapshot_every == 0) {
        save_snapshot(cfg_.snapshot_path);
    }
}

void SearchSession::run_to_completion(const Evaluator& evaluator) {
    while (const std::optional<WireJob> job = next_job()) {
        complete_job(job->id, evaluator.accuracy_of(job->encoding));
        maybe_snapshot();
    }
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

json net_to_json(const DenseNet& net) {
    json j;
    j["w"] = net.weights();
    j["b"] = net.biases();
    j["mw"] = net.adam_m_w();
    j["vw"] = net.adam_v_w();
    j["mb"] = net.adam_m_b();
    j["vb"] = net.adam_v_b();
    j["t"] = net.adam_t();
    return j;
}

void layer_from_json(const json& src,
                     std::vector<std::vector<double>>& dst,
                     const char* what) {
    if (!src.is_array() || src.size() != dst.size()) {
        throw CorruptSnapshot(std::string("snapshot ") + what +
                              " layer count mismatch");
    }
    for (std::size_t l = 0; l < dst.size(); ++l) {
        const auto& layer = src[l];
        if (!layer.is_array() || layer.size() != dst[l].size()) {
            throw CorruptSnapshot(std::string("snapshot ") + what +
                                  " size mismatch at layer " +
                                  std::to_string(l));
        }
        for (std::size_t i = 0; i < dst[l].size(); ++i) {
            dst[l][i] = layer[i].get<double>();
        }
    }
}

void net_from_json(const json& j, DenseNet& net) {
    layer_from_json(j.at("w"), net.weights(), "weights");
    layer_from_json(j.at("b"), net.biases(), "biases");
    layer_from_json(j.at("mw"), net.adam_m_w(), "adam m_w");
    layer_from_json(j.at("vw"), net.adam_v_w(), "adam v_w");
    layer_from_json(j.at("mb"), net.adam_m_b(), "adam m_b");
    layer_from_json(j.at("vb"), net.adam_v_b(), "adam v_b");
    net.set_adam_t(j.at("t").get<long>());
}

json config_to_json(const SessionConfig& cfg) {
    json j;
    j["domain"] = domain_name(cfg.limits.domain);
    j["max_nodes"] = cfg.limits.max_nodes;
    j["num_op_types"] = cfg.limits.num_op_types;
    if (cfg.limits.max_edges) j["max_edges"] = *cfg.limits.max_edges;
    j["max_blocks"] = cfg.limits.max_blocks;
    j["num_layer_types"] = cfg.limits.num_layer_types;
    j["max_layers_per_branch"] = cfg.limits.max_layers_per_branch;
    j["block_depth_limit"] = cfg.limits.block_depth_limit;
    j["c"] = cfg.search.c;
    j["k"] = cfg.search.k;
    j["max_tree_depth"] = cfg.search.max_tree_depth;
    j["seed"] = cfg.search.seed;
    j["meta_dnn"] = cfg.search.meta_dnn_enabled;
    j["hidden_dims"] = cfg.surrogate.hidden_dims;
    j["multi_stage"] = cfg.surrogate.multi_stage;
    j["bins"] = cfg.surrogate.bins;
    j["epochs"] = cfg.surrogate.train.epochs;
    j["batch_size"] = cfg.surrogate.train.batch_size;
    j["learning_rate"] = cfg.surrogate.train.learning_rate;
    j["beta1"] = cfg.surrogate.train.beta1;
    j["beta2"] = cfg.surrogate.train.beta2;
    j["adam_epsilon"] = cfg.surrogate.train.adam_epsilon;
    j["retrain_from_scratch"] = cfg.surrogate.retrain_from_scratch;
    j["evaluator"] = cfg.evaluator_spec;
    j["budget"] = cfg.budget;
    if (cfg.target_accuracy) j["target_accuracy"] = *cfg.target_accuracy;
    j["target_tolerance"] = cfg.target_tolerance;
    j["max_iterations"] = cfg.max_iterations;
    j["retrain_every"] = cfg.retrain_every;
    j["snapshot_every"] = cfg.snapshot_every;
    j["snapshot_path"] = cfg.snapshot_path;
    j["cost_full"] = cfg.cost.full_epochs;
    j["cost_transfer"] = cfg.cost.transfer_epochs;
    return j;
}

SessionConfig config_from_json(const json& j) {
    SessionConfig cfg;
    cfg.limits.domain =
        j.at("domain").get<std::string>() == "cell" ? Domain::cell
                                                    : Domain::dag;
    cfg.limits.max_nodes = j.at("max_nodes").get<int>();
    cfg.limits.num_op_types = j.at("num_op_types").get<int>();
    if (j.contains("max_edges")) {
        cfg.limits.max_edges = j.at("max_edges").get<int>();
    }
    cfg.limits.max_blocks = j.at("max_blocks").get<int>();
    cfg.limits.num_layer_types = j.at("num_layer_types").get<int>();
    cfg.limits.max_layers_per_branch =
        j.at("max_layers_per_branch").get<int>();
    cfg.limits.block_depth_limit = j.at("block_depth_limit").get<int>();
    cfg.search.c = j.at("c").get<double>();
    cfg.search.k = j.at("k").get<int>();
    cfg.search.max_tree_depth = j.at("max_tree_depth").get<int>();
    cfg.search.seed = j.at("seed").get<std::uint64_t>();
    cfg.search.meta_dnn_enabled = j.at("meta_dnn").get<bool>();
    cfg.surrogate.hidden_dims =
        j.at("hidden_dims").get<std::vector<int>>();
    cfg.surrogate.multi_stage = j.at("multi_stage").get<bool>();
    cfg.surrogate.bins = j.at("bins").get<int>();
    cfg.surrogate.train.epochs = j.at("epochs").get<int>();
    cfg.surrogate.train.batch_size = j.at("batch_size").get<int>();
    cfg.surrogate.train.learning_rate = j.at("learning_rate").get<double>();
    cfg.surrogate.train.beta1 = j.at("beta1").get<double>();
    cfg.surrogate.train.beta2 = j.at("beta2").get<double>();
    cfg.surrogate.train.adam_epsilon = j.at("adam_epsilon").get<double>();
    cfg.surrogate.retrain_from_scratch =
        j.at("retrain_from_scratch").get<bool>();
    cfg.evaluator_spec = j.at("evaluator").get<std::string>();
    cfg.budget = j.at("budget").get<std::uint64_t>();
    if (j.contains("target_accuracy")) {
        cfg.target_accuracy = j.at("target_accuracy").get<double>();
    }
    cfg.target_tolerance = j.at("target_tolerance").get<double>();
    cfg.max_iterations = j.at("max_iterations").get<std::uint64_t>();
    cfg.retrain_every = j.at("retrain_every").get<int>();
    cfg.snapshot_every = j.at("snapshot_every").get<int>();
    cfg.snapshot_path = j.at("snapshot_path").get<std::string>();
    cfg.cost.full_epochs = j.at("cost_full").get<int>();
    cfg.cost.transfer_epochs = j.at("cost_transfer").get<int>();
    return cfg;
}

}  // namespace

std::string SearchSession::to_snapshot_json() const {
    json j;
    j["format_version"] = 1;
    j["config"] = config_to_json(cfg_);
    j["rng"] = {{"seed", rng_.seed()}, {"draws", rng_.draws()}};

    json counters;
    counters["iterations"] = engine_->iterations();
    counters["unique"] = unique_;
    counters["next_engine_job"] = engine_->next_job_id();
    counters["next_wire_job"] = next_wire_id_;
    counters["since_fit"] = since_fit_;
    counters["ledger_evaluations"] = ledger_.evaluations;
    counters["ledger_transferred"] = ledger_.transferred;
    counters["ledger_epochs"] = ledger_.epochs;
    j["counters"] = counters;

    if (best_encoding_) {
        j["best"] = {{"accuracy", best_accuracy_},
                     {"encoding", best_encoding_->text()}};
    } else {
        j["best"] = nullptr;
    }

    // Tree rows for nodes 1..N-1 in id order: the incoming edge carries all
    // mutable per-node state (unexpanded edges are provably all-zero).
    json tree = json::array();
    for (int id = 1; id < engine_->tree().size(); ++id) {
        const SearchTree::Node& n = engine_->tree().node(id);
        const SearchTree::Edge& e =
            engine_->tree().edge(n.parent, n.parent_edge);
        tree.push_back(json::array(
            {n.parent, n.parent_edge, e.q_sum, e.visits}));
    }
    j["tree"] = tree;

    json cache = json::array();
    for (const auto& [enc, acc] : engine_->evaluated()) {
        cache.push_back(json::array({enc.text(), acc}));
    }
    j["cache"] = cache;

    json pending = json::array();
    for (const auto& [id, rec] : engine_->pending()) {
        pending.push_back(json::array({id, rec.arch.text(), rec.path,
                                       rec.predicted_mean, rec.rollout_from}));
    }
    j["pending"] = pending;

    json inflight = json::array();
    for (const auto& [id, rec] : inflight_) {
        inflight.push_back(json::array(
            {id, rec.job.encoding.text(),
             rec.job.parent_encoding ? json(rec.job.parent_encoding->text())
                                     : json(nullptr),
             rec.job.from_transfer, rec.engine_jobs}));
    }
    j["inflight"] = inflight;

    json events = json::array();
    for (const TraceEvent& e : events_) {
        events.push_back(json::array({e.unique_eval_index, e.encoding.text(),
                                      e.accuracy, e.best_so_far,
                                      e.cumulative_cost_epochs}));
    }
    j["events"] = events;

    if (surrogate_) {
        json s;
        json buffer = json::array();
        for (std::size_t i = 0; i < surrogate_->buffer_size(); ++i) {
            buffer.push_back(json::array(
                {surrogate_->buffer_encodings()[i].text(),
                 surrogate_->buffer_accuracies()[i]}));
        }
        s["buffer"] = buffer;
        s["net"] = net_to_json(surrogate_->net());
        if (MultiStageModel* multi = surrogate_->multi_stage()) {
            json m;
            m["router"] = net_to_json(multi->router());
            json experts = json::array();
            for (int b = 0; b < multi->bins(); ++b) {
                experts.push_back(net_to_json(multi->expert(b)));
            }
            m["experts"] = experts;
            s["multi"] = m;
        } else {
            s["multi"] = nullptr;
        }
        j["surrogate"] = s;
    } else {
        j["surrogate"] = nullptr;
    }
    return j.dump();
}

void SearchSession::save_snapshot(const std::string& path) const {
    const std::string body = to_snapshot_json();
    const std::string file =
        body + "\nchecksum " + std::to_string(fnv1a64(body)) + "\n";
    try {
        write_file_atomic(path, file);
    } catch (const std::exception& e) {
        throw SnapshotError(e.what());
    }
}

void SearchSession::load_snapshot_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw CorruptSnapshot(std::string("snapshot parse error: ") +
                              e.what());
    }

    rng_.restore(j.at("rng").at("seed").get<std::uint64_t>(),
                 j.at("rng").at("draws").get<std::uint64_t>());

    const json& counters = j.at("counters");
    engine_->set_iterations(counters.at("iterations").get<std::uint64_t>());
    engine_->set_next_job_id(
        counters.at("next_engine_job").get<std::uint64_t>());
    next_wire_id_ = counters.at("next_wire_job").get<std::uint64_t>();
    unique_ = counters.at("unique").get<std::int64_t>();
    since_fit_ = counters.at("since_fit").get<int>();
    ledger_.evaluations =
        counters.at("ledger_evaluations").get<std::int64_t>();
    ledger_.transferred =
        counters.at("ledger_transferred").get<std::int64_t>();
    ledger_.epochs = counters.at("ledger_epochs").get<std::int64_t>();

    if (!j.at("best").is_null()) {
        best_accuracy_ = j.at("best").at("accuracy").get<double>();
        best_encoding_ = EncodedArch::from_text(
            j.at("best").at("encoding").get<std::string>());
    }

    SearchTree& tree = engine_->tree();
    for (const json& row : j.at("tree")) {
        const int parent = row.at(0).get<int>();
        const int edge = row.at(1).get<int>();
        try {
            tree.expand(parent, edge);
        } catch (const std::exception& e) {
            throw CorruptSnapshot(std::string("snapshot tree replay: ") +
                                  e.what());
        }
        tree.edge(parent, edge).q_sum = row.at(2).get<double>();
        tree.edge(parent, edge).visits = row.at(3).get<std::int64_t>();
        tree.add_visit_total(parent, row.at(3).get<std::int64_t>());
    }

    std::map<EncodedArch, double> cache;
    for (const json& row : j.at("cache")) {
        cache[EncodedArch::from_text(row.at(0).get<std::string>())] =
            row.at(1).get<double>();
    }
    engine_->restore_evaluated(std::move(cache));

    std::map<std::uint64_t, MctsEngine::Pending> pending;
    for (const json& row : j.at("pending")) {
        MctsEngine::Pending rec;
        rec.arch = EncodedArch::from_text(row.at(1).get<std::string>());
        rec.path =
            row.at(2).get<std::vector<std::pair<int, int>>>();
        rec.predicted_mean = row.at(3).get<double>();
        rec.rollout_from = row.at(4).get<int>();
        pending.emplace(row.at(0).get<std::uint64_t>(), std::move(rec));
    }
    engine_->restore_pending(std::move(pending));

    inflight_.clear();
    inflight_by_arch_.clear();
    for (const json& row : j.at("inflight")) {
        Inflight rec;
        rec.job.id = row.at(0).get<std::uint64_t>();
        rec.job.encoding =
            EncodedArch::from_text(row.at(1).get<std::string>());
        if (!row.at(2).is_null()) {
            rec.job.parent_encoding =
                EncodedArch::from_text(row.at(2).get<std::string>());
        }
        rec.job.from_transfer = row.at(3).get<bool>();
        rec.engine_jobs = row.at(4).get<std::vector<std::uint64_t>>();
        inflight_by_arch_[rec.job.encoding] = rec.job.id;
        inflight_.emplace(rec.job.id, std::move(rec));
    }

    events_.clear();
    for (const json& row : j.at("events")) {
        events_.push_back(TraceEvent{
            row.at(0).get<std::int64_t>(),
            EncodedArch::from_text(row.at(1).get<std::string>()),
            row.at(2).get<double>(), row.at(3).get<double>(),
            row.at(4).get<std::int64_t>()});
    }

    if (surrogate_) {
        if (j.at("surrogate").is_null()) {
            throw CorruptSnapshot("snapshot lacks surrogate state");
        }
        const json& s = j.at("surrogate");
        std::vector<EncodedArch> xs;
        std::vector<double> ys;
        for (const json& row : s.at("buffer")) {
            xs.push_back(
                EncodedArch::from_text(row.at(0).get<std::string>()));
            ys.push_back(row.at(1).get<double>());
        }
        surrogate_->restore_buffer(std::move(xs), std::move(ys));
        net_from_json(s.at("net"), surrogate_->net());
        if (MultiStageModel* multi = surrogate_->multi_stage()) {
            if (s.at("multi").is_null()) {
                throw CorruptSnapshot("snapshot lacks multi-stage state");
            }
            net_from_json(s.at("multi").at("router"), multi->router());
            const json& experts = s.at("multi").at("experts");
            if (static_cast<int>(experts.size()) != multi->bins()) {
                throw CorruptSnapshot("snapshot expert count mismatch");
            }
            for (int b = 0; b < multi->bins(); ++b) {
                net_from_json(experts[b], multi->expert(b));
            }
        }
    }
}

SearchSession SearchSession::restore_snapshot(const std::string& path) {
    std::string content;
    try {
        content = read_file(path);
    } catch (const std::exception& e) {
        throw SnapshotError(e.what());
    }

    const std::size_t nl = content.find('\n');
    if (nl == std::string::npos) {
        throw CorruptSnapshot("snapshot has no checksum line");
    }
    const std::string body = content.substr(0, nl);
    const std::string tail = content.substr(nl + 1);
    const std::string expected =
        "checksum " + std::to_string(fnv1a64(body)) + "\n";
    if (tail != expected) {
        throw CorruptSnapshot("snapshot checksum mismatch");
    }

    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw CorruptSnapshot(std::string("snapshot parse error: ") +
                              e.what());
    }
    if (!j.contains("format_version") ||
        !j.at("format_version").is_number_integer()) {
        throw CorruptSnapshot("snapshot lacks a format version");
    }
    if (j.at("format_version").get<int>() != 1) {
        throw VersionMismatch(
            "snapshot format version " +
            std::to_string(j.at("format_version").get<int>()) +
            " unsupported (want 1)");
    }

    SearchSession session(config_from_json(j.at("config")));
    session.load_snapshot_json(body);
    return session;
}

}  // namespace archsearch
