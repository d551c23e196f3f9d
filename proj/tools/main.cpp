// Command-line front end: single search runs, benchmark sweeps across
// algorithms, the distributed master/worker pair, exhaustive space
// enumeration, and standalone surrogate training on an encoding CSV.
//
// Exit codes: 0 success, 2 configuration / input error, 3 evaluator
// mismatch (architecture missing from a tabular evaluator), 4 wire
// protocol error, 5 snapshot error.

#include <CLI11.hpp>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "archsearch/baselines.hpp"
#include "archsearch/distributed.hpp"
#include "archsearch/errors.hpp"
#include "archsearch/evaluator.hpp"
#include "archsearch/harness.hpp"
#include "archsearch/mcts.hpp"
#include "archsearch/session.hpp"
#include "archsearch/space.hpp"
#include "archsearch/space_enum.hpp"
#include "archsearch/surrogate.hpp"
#include "archsearch/util.hpp"

namespace {

using namespace archsearch;

// ---------------------------------------------------------------------------
// Shared search flags

struct SearchFlags {
    std::string space = "dag";
    int max_nodes = 7;
    int ops = 3;
    std::string evaluator = "synthetic:0";
    std::uint64_t budget = 100;
    double c = 0.5;
    int k = 10;
    std::uint64_t seed = 0;
    bool no_meta_dnn = false;
    int snapshot_every = 0;
    std::string snapshot;
    std::string resume;
    std::string out;
};

void add_space_flags(CLI::App* cmd, SearchFlags& f) {
    cmd->add_option("--space", f.space, "search domain")
        ->check(CLI::IsMember({"dag", "cell"}));
    cmd->add_option("--max-nodes", f.max_nodes,
                    "node budget, input and output included");
    cmd->add_option("--ops", f.ops, "number of operator types");
}

void add_search_flags(CLI::App* cmd, SearchFlags& f) {
    add_space_flags(cmd, f);
    cmd->add_option("--evaluator", f.evaluator,
                    "synthetic:<seed> or tabular:<path>");
    cmd->add_option("--budget", f.budget, "unique true evaluations to spend");
    cmd->add_option("--c", f.c, "UCB exploration constant");
    cmd->add_option("--k", f.k, "surrogate-guided rollouts per expansion");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_flag("--no-meta-dnn", f.no_meta_dnn,
                  "disable the surrogate (plain MCTS ablation)");
    cmd->add_option("--snapshot-every", f.snapshot_every,
                    "unique evaluations between snapshots (0 = off)");
    cmd->add_option("--snapshot", f.snapshot, "snapshot file path");
    cmd->add_option("--resume", f.resume, "resume from this snapshot file");
    cmd->add_option("--out", f.out, "write the final tree dump to this file");
}

SessionConfig to_session_config(const SearchFlags& f) {
    SessionConfig cfg;
    cfg.limits.domain = f.space == "cell" ? Domain::cell : Domain::dag;
    cfg.limits.max_nodes = f.max_nodes;
    cfg.limits.num_op_types = f.ops;
    cfg.search.c = f.c;
    cfg.search.k = f.k;
    cfg.search.seed = f.seed;
    cfg.search.meta_dnn_enabled = !f.no_meta_dnn;
    cfg.evaluator_spec = f.evaluator;
    cfg.budget = f.budget;
    cfg.snapshot_every = f.snapshot_every;
    cfg.snapshot_path = f.snapshot;
    return cfg;
}

void write_or_throw(const std::string& path, const std::string& body) {
    try {
        write_file_atomic(path, body);
    } catch (const std::exception& e) {
        throw IoError("cannot write " + path + ": " + e.what());
    }
}

void print_run_summary(const SearchSession& session) {
    std::cout << "unique_evaluations " << session.unique_evaluations() << "\n"
              << "iterations " << session.iterations() << "\n"
              << "cost_epochs " << session.ledger().epochs << "\n"
              << "transferred " << session.ledger().transferred << "\n";
    if (session.best_encoding()) {
        std::cout << "best_encoding " << session.best_encoding()->text() << "\n"
                  << "best_accuracy " << format_double(session.best_accuracy())
                  << "\n";
    }
    if (session.samples_to_target()) {
        std::cout << "samples_to_target " << *session.samples_to_target()
                  << "\n";
    }
}

void finish_session(const SearchSession& session, const SearchFlags& f) {
    if (!f.out.empty()) {
        write_or_throw(f.out, dump_tree(session.engine().tree()));
    }
    if (!f.snapshot.empty()) session.save_snapshot(f.snapshot);
    print_run_summary(session);
}

// Fresh session from flags, or a restored one. A restored session keeps its
// snapshotted budget unless --budget was given explicitly on this invocation.
SearchSession open_session(const SearchFlags& f, bool budget_given) {
    if (!f.resume.empty()) {
        SearchSession session = SearchSession::restore_snapshot(f.resume);
        if (budget_given) session.set_budget(f.budget);
        return session;
    }
    return SearchSession(to_session_config(f));
}

std::pair<std::string, int> split_hostport(const std::string& s) {
    const auto pos = s.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == s.size()) {
        throw ConfigError("expected host:port, got \"" + s + "\"");
    }
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(s.substr(pos + 1), &used);
        if (used != s.size() - pos - 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        throw ConfigError("invalid port in \"" + s + "\"");
    }
    if (port < 1 || port > 65535) {
        throw ConfigError("port out of range in \"" + s + "\"");
    }
    return {s.substr(0, pos), port};
}

// ---------------------------------------------------------------------------
// search

int cmd_search(const SearchFlags& f, bool budget_given) {
    SearchSession session = open_session(f, budget_given);
    const auto evaluator =
        make_evaluator(session.config().evaluator_spec, session.config().limits);
    session.run_to_completion(*evaluator);
    finish_session(session, f);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// serve / worker

int cmd_serve(const SearchFlags& f, const std::string& listen,
              bool budget_given) {
    // The listener binds every interface; only the port part of --listen is
    // used for binding, the host part documents what workers should dial.
    MasterOptions opt;
    opt.port = split_hostport(listen).second;
    std::unique_ptr<Master> master;
    if (!f.resume.empty()) {
        master = std::make_unique<Master>(open_session(f, budget_given), opt);
    } else {
        master = std::make_unique<Master>(to_session_config(f), opt);
    }
    std::cout << "listening on port " << master->port() << "\n" << std::flush;
    master->run();
    finish_session(master->session(), f);
    return kExitOk;
}

int cmd_worker(const SearchFlags& f, const std::string& connect) {
    const auto [host, port] = split_hostport(connect);
    const SessionConfig cfg = to_session_config(f);
    const auto evaluator = make_evaluator(cfg.evaluator_spec, cfg.limits);
    WorkerOptions opt;
    opt.worker_id = "worker-" + std::to_string(::getpid());
    worker_loop(host, port, *evaluator, opt);
    std::cout << opt.worker_id << " finished\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchFlags {
    SearchFlags search;
    std::string algos = "mcts,mcts-nm,rs,re,hc,ql";
    int trials = 20;
    std::uint64_t base_seed = 0;
    std::string target = "auto";
    std::string out_dir = "bench_report";
    bool svg = false;
    int jobs = 1;
};

std::vector<std::string> split_algos(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : csv + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (out.empty()) {
        throw ConfigError("--algos must name at least one algorithm");
    }
    for (const std::string& a : out) {
        if (!is_known_algorithm(a)) {
            throw ConfigError("unknown algorithm \"" + a + "\"");
        }
    }
    return out;
}

int cmd_bench(const BenchFlags& bf) {
    SessionConfig base = to_session_config(bf.search);
    const auto evaluator = make_evaluator(base.evaluator_spec, base.limits);
    if (bf.target == "auto") {
        // Tabular evaluators know their argmax; the synthetic oracle answers
        // nullopt, so its optimum is brute-forced over the enumerated space
        // (SpaceTooLarge past ~2e7 architectures; pass a number instead).
        auto best = evaluator->best();
        if (!best) {
            for (const DagArchitecture& a : enumerate_space_vec(base.limits)) {
                const EncodedArch enc = encode(ArchState{a});
                const double acc = evaluator->accuracy_of(enc);
                if (!best || acc > best->second) best = {enc, acc};
            }
        }
        if (!best) {
            throw ConfigError("--target auto found no complete architecture");
        }
        base.target_accuracy = best->second;
        std::cout << "target " << format_double(best->second) << " ("
                  << best->first.text() << ")\n";
    } else {
        try {
            std::size_t used = 0;
            base.target_accuracy = std::stod(bf.target, &used);
            if (used != bf.target.size()) throw std::invalid_argument(bf.target);
        } catch (const std::exception&) {
            throw ConfigError("--target must be auto or a number, got \"" +
                              bf.target + "\"");
        }
    }

    const std::vector<std::string> algos = split_algos(bf.algos);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TrialTrace> traces;
    for (const std::string& algo : algos) {
        std::vector<TrialTrace> part = run_trials(algo, base, *evaluator,
                                                  bf.trials, bf.base_seed,
                                                  bf.jobs);
        std::cout << algo << ": " << part.size() << " trials done\n"
                  << std::flush;
        for (TrialTrace& t : part) traces.push_back(std::move(t));
    }

    EmitOptions opt;
    opt.svg = bf.svg;
    opt.baseline =
        std::find(algos.begin(), algos.end(), "rs") != algos.end()
            ? "rs"
            : algos.front();
    opt.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    emit_report(traces, bf.out_dir, opt);

    const BenchReport report = make_report(traces, opt.baseline);
    for (const AlgorithmSummary& a : report.algorithms) {
        std::cout << a.algorithm << " reached " << a.reached_target << "/"
                  << a.trials;
        if (a.samples) {
            std::cout << " median_samples " << format_double(a.samples->median);
        }
        if (a.speedup_vs_baseline) {
            std::cout << " speedup_vs_" << opt.baseline << " "
                      << format_double(*a.speedup_vs_baseline);
        }
        std::cout << "\n";
    }
    std::cout << "report written to " << bf.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// enumerate

int cmd_enumerate(const SearchFlags& f, const std::string& export_path) {
    SpaceLimits limits;
    limits.domain = Domain::dag;
    limits.max_nodes = f.max_nodes;
    limits.num_op_types = f.ops;
    const std::vector<DagArchitecture> archs = enumerate_space_vec(limits);
    std::cout << "count " << archs.size() << "\n";
    if (!export_path.empty()) {
        std::string csv = "encoding\n";
        for (const DagArchitecture& a : archs) {
            csv += encode(ArchState{a}).text() + "\n";
        }
        write_or_throw(export_path, csv);
        std::cout << "exported to " << export_path << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// surrogate

struct SurrogateFlags {
    std::string train_csv;
    double holdout = 0.2;
    bool multi_stage = false;
    bool report = false;
};

struct LabelledRows {
    std::vector<std::vector<int>> digits;
    std::vector<double> accuracy;
    int width = 0;
    int max_digit = 1;
};

LabelledRows parse_training_csv(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    LabelledRows rows;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("encoding", 0) == 0) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected <encoding>,<accuracy>");
        }
        EncodedArch enc;
        try {
            enc = EncodedArch::from_text(line.substr(0, comma));
        } catch (const std::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " +
                             e.what());
        }
        double acc = 0.0;
        try {
            std::size_t used = 0;
            acc = std::stod(line.substr(comma + 1), &used);
            if (used != line.size() - comma - 1) {
                throw std::invalid_argument(line);
            }
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": bad accuracy value");
        }
        if (!std::isfinite(acc) || acc < 0.0 || acc > 1.0) {
            throw AccuracyOutOfRange("line " + std::to_string(line_no) +
                                     ": accuracy outside [0, 1]");
        }
        if (rows.width == 0) {
            rows.width = static_cast<int>(enc.digits.size());
        } else if (static_cast<int>(enc.digits.size()) != rows.width) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": encoding width differs from earlier rows");
        }
        for (const int d : enc.digits) rows.max_digit = std::max(rows.max_digit, d);
        rows.digits.push_back(enc.digits);
        rows.accuracy.push_back(acc);
    }
    if (rows.digits.empty()) throw EmptyDataset("no samples in " + path);
    return rows;
}

void print_split_metrics(const char* name, const std::vector<double>& pred,
                         const std::vector<double>& truth) {
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    std::cout << name << "_mse " << format_double(mse) << "\n";
    if (pred.size() < 2) return;
    try {
        std::cout << name << "_pearson " << format_double(pearson(pred, truth))
                  << "\n";
    } catch (const DegenerateVariance&) {
        std::cout << name << "_pearson nan\n";
    }
    try {
        std::cout << name << "_spearman "
                  << format_double(spearman(pred, truth)) << "\n";
    } catch (const DegenerateVariance&) {
        std::cout << name << "_spearman nan\n";
    }
}

int cmd_surrogate(const SurrogateFlags& f) {
    if (!(f.holdout >= 0.0 && f.holdout < 1.0)) {
        throw ConfigError("--holdout must lie in [0, 1)");
    }
    const LabelledRows rows = parse_training_csv(f.train_csv);
    const int n = static_cast<int>(rows.digits.size());
    const int hold = static_cast<int>(std::floor(f.holdout * n));
    const int train_n = n - hold;

    // Digits scaled into [0, 1] by the largest digit seen in the file; the
    // split is the file's own order (last rows held out), so reruns match.
    std::vector<double> features;
    features.reserve(static_cast<std::size_t>(n) * rows.width);
    for (const std::vector<int>& row : rows.digits) {
        for (const int d : row) {
            features.push_back(static_cast<double>(d) / rows.max_digit);
        }
    }
    const std::vector<double> train_x(
        features.begin(), features.begin() + static_cast<std::ptrdiff_t>(
                                                 train_n) * rows.width);
    const std::vector<double> train_y(rows.accuracy.begin(),
                                      rows.accuracy.begin() + train_n);

    // The library default schedule is tuned for incremental refits inside a
    // search; a one-shot fit from the CLI gets a longer, faster schedule.
    TrainConfig train_cfg;
    train_cfg.epochs = 200;
    train_cfg.batch_size = 32;
    train_cfg.learning_rate = 1e-3;

    Rng rng(0);
    std::vector<double> pred(n, 0.0);
    if (f.multi_stage) {
        MultiStageModel model(rows.width, {64, 128, 64}, 4);
        model.init(rng);
        model.train(train_x, train_y, train_n, train_cfg, rng);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> x(
                features.begin() + static_cast<std::ptrdiff_t>(i) * rows.width,
                features.begin() +
                    static_cast<std::ptrdiff_t>(i + 1) * rows.width);
            pred[i] = model.predict(x);
        }
    } else {
        DenseNet net({rows.width, 64, 128, 64, 1});
        net.init(rng);
        net.train(train_x, train_y, train_n, train_cfg, rng);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> x(
                features.begin() + static_cast<std::ptrdiff_t>(i) * rows.width,
                features.begin() +
                    static_cast<std::ptrdiff_t>(i + 1) * rows.width);
            pred[i] = net.predict_scalar(x);
        }
    }

    std::cout << "trained " << (f.multi_stage ? "multi-stage" : "single-stage")
              << " surrogate on " << train_n << " samples (" << hold
              << " held out)\n";
    if (f.report) {
        print_split_metrics(
            "train",
            std::vector<double>(pred.begin(), pred.begin() + train_n),
            train_y);
        if (hold > 0) {
            print_split_metrics(
                "holdout",
                std::vector<double>(pred.begin() + train_n, pred.end()),
                std::vector<double>(rows.accuracy.begin() + train_n,
                                    rows.accuracy.end()));
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo tree search over combinatorial architecture "
                 "spaces"};
    app.require_subcommand(1);

    SearchFlags search_flags;
    CLI::App* search_cmd =
        app.add_subcommand("search", "run one search to budget or target");
    add_search_flags(search_cmd, search_flags);

    SearchFlags serve_flags;
    std::string listen;
    CLI::App* serve_cmd =
        app.add_subcommand("serve", "run the search master for remote workers");
    add_search_flags(serve_cmd, serve_flags);
    serve_cmd->add_option("--listen", listen, "host:port to serve on")
        ->required();

    SearchFlags worker_flags;
    std::string connect;
    CLI::App* worker_cmd =
        app.add_subcommand("worker", "evaluate architectures for a master");
    add_space_flags(worker_cmd, worker_flags);
    worker_cmd->add_option("--evaluator", worker_flags.evaluator,
                           "synthetic:<seed> or tabular:<path>");
    worker_cmd->add_option("--connect", connect, "master host:port")
        ->required();

    BenchFlags bench_flags;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "compare algorithms over seeded trials");
    add_search_flags(bench_cmd, bench_flags.search);
    bench_cmd->add_option("--algos", bench_flags.algos,
                          "comma list from mcts,mcts-nm,rs,re,hc,ql");
    bench_cmd->add_option("--trials", bench_flags.trials, "trials per algorithm");
    bench_cmd->add_option("--base-seed", bench_flags.base_seed,
                          "seed of trial 0; trial i uses base-seed + i");
    bench_cmd->add_option("--target", bench_flags.target,
                          "auto (evaluator optimum) or an accuracy");
    bench_cmd->add_option("--out-dir", bench_flags.out_dir,
                          "directory for the report files");
    bench_cmd->add_flag("--svg", bench_flags.svg, "also write SVG plots");
    bench_cmd->add_option("--jobs", bench_flags.jobs,
                          "worker threads for trials");

    SearchFlags enum_flags;
    std::string export_path;
    CLI::App* enum_cmd =
        app.add_subcommand("enumerate", "count (and export) the dag space");
    enum_cmd->add_option("--max-nodes", enum_flags.max_nodes,
                         "node budget, input and output included");
    enum_cmd->add_option("--ops", enum_flags.ops, "number of operator types");
    enum_cmd->add_option("--export", export_path,
                         "write one encoding per line to this CSV");

    SurrogateFlags surrogate_flags;
    CLI::App* surrogate_cmd = app.add_subcommand(
        "surrogate", "fit a surrogate on an encoding,accuracy CSV");
    surrogate_cmd
        ->add_option("--train", surrogate_flags.train_csv, "training CSV path")
        ->required();
    surrogate_cmd->add_option("--holdout", surrogate_flags.holdout,
                              "fraction of trailing rows held out");
    surrogate_cmd->add_flag("--multi-stage", surrogate_flags.multi_stage,
                            "use the binned multi-stage model");
    surrogate_cmd->add_flag("--report", surrogate_flags.report,
                            "print fit metrics per split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (app.got_subcommand(search_cmd)) {
            return cmd_search(search_flags, search_cmd->count("--budget") > 0);
        }
        if (app.got_subcommand(serve_cmd)) {
            return cmd_serve(serve_flags, listen,
                             serve_cmd->count("--budget") > 0);
        }
        if (app.got_subcommand(worker_cmd)) {
            return cmd_worker(worker_flags, connect);
        }
        if (app.got_subcommand(bench_cmd)) return cmd_bench(bench_flags);
        if (app.got_subcommand(enum_cmd)) {
            return cmd_enumerate(enum_flags, export_path);
        }
        if (app.got_subcommand(surrogate_cmd)) {
            return cmd_surrogate(surrogate_flags);
        }
    } catch (const NotInTable& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEvaluatorMismatch;
    } catch (const ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProtocolError;
    } catch (const SnapshotError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSnapshotError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitOk;
}
