#include "archsearch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <thread>
#include <utility>

#include <json.hpp>

#include "archsearch/errors.hpp"
#include "archsearch/util.hpp"
#include "archsearch/wire.hpp"

namespace archsearch {

// ---------------------------------------------------------------------------
// Trials

bool is_known_algorithm(const std::string& name) {
    return name == "mcts" || name == "mcts-nm" || name == "rs" ||
           name == "re" || name == "hc" || name == "ql";
}

TrialTrace run_single_trial(const std::string& algorithm,
                            const SessionConfig& base, std::uint64_t seed,
                            const Evaluator& evaluator) {
    SessionConfig cfg = base;
    cfg.search.seed = seed;
    // Benchmark trials are throwaway runs; per-trial snapshots would race
    // each other on one path and mean nothing afterwards.
    cfg.snapshot_every = 0;
    cfg.snapshot_path.clear();

    TrialTrace trace;
    trace.algorithm = algorithm;
    trace.seed = seed;

    if (algorithm == "mcts" || algorithm == "mcts-nm") {
        if (algorithm == "mcts-nm") cfg.search.meta_dnn_enabled = false;
        trace.config_hash = config_hash(cfg);
        SearchSession session(cfg);
        session.run_to_completion(evaluator);
        trace.events = session.events();
        trace.samples_to_target = session.samples_to_target();
        return trace;
    }

    trace.config_hash = config_hash(cfg);
    BaselineConfig bc;
    bc.seed = seed;
    bc.budget = cfg.budget;
    bc.target_accuracy = cfg.target_accuracy;
    bc.target_tolerance = cfg.target_tolerance;
    bc.max_tree_depth = cfg.search.max_tree_depth;
    bc.cost = cfg.cost;

    BaselineResult r;
    if (algorithm == "rs") {
        r = random_search(cfg.limits, evaluator, bc);
    } else if (algorithm == "re") {
        r = regularized_evolution(cfg.limits, evaluator, bc);
    } else if (algorithm == "hc") {
        r = hill_climb(cfg.limits, evaluator, bc);
    } else if (algorithm == "ql") {
        r = q_learning(cfg.limits, evaluator, bc);
    } else {
        throw ConfigError("unknown algorithm \"" + algorithm + "\"");
    }
    trace.events = std::move(r.events);
    trace.samples_to_target = r.samples_to_target;
    return trace;
}

std::vector<TrialTrace> run_trials(const std::string& algorithm,
                                   const SessionConfig& base,
                                   const Evaluator& evaluator, int trials,
                                   std::uint64_t base_seed, int jobs) {
    if (!is_known_algorithm(algorithm)) {
        throw ConfigError("unknown algorithm \"" + algorithm + "\"");
    }
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");

    std::vector<TrialTrace> out(static_cast<std::size_t>(trials));
    if (jobs == 1) {
        for (int i = 0; i < trials; ++i) {
            out[i] = run_single_trial(algorithm, base, base_seed + i,
                                      evaluator);
        }
        return out;
    }

    const int nthreads = std::min(jobs, trials);
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(nthreads);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                while (true) {
                    const int i = next.fetch_add(1);
                    if (i >= trials) break;
                    out[i] = run_single_trial(algorithm, base, base_seed + i,
                                              evaluator);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

double median_of(std::vector<double> values) {
    if (values.empty()) throw EmptyDataset("median of an empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2]
                      : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Quartiles quartiles_of(std::vector<double> values) {
    if (values.empty()) throw EmptyDataset("quartiles of an empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    Quartiles q;
    q.median = n % 2 == 1 ? values[n / 2]
                          : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    if (n == 1) {
        q.q1 = q.q3 = values[0];
        return q;
    }
    const std::vector<double> lower(values.begin(), values.begin() + n / 2);
    const std::vector<double> upper(values.begin() + (n + 1) / 2,
                                    values.end());
    q.q1 = median_of(lower);
    q.q3 = median_of(upper);
    return q;
}

MannWhitneyResult mann_whitney_less(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    if (a.empty() || b.empty()) {
        throw EmptyDataset("mann_whitney_less needs two non-empty samples");
    }
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    const std::size_t total = n + m;

    std::vector<std::pair<double, int>> all;
    all.reserve(total);
    for (const double v : a) all.emplace_back(v, 0);
    for (const double v : b) all.emplace_back(v, 1);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& x, const auto& y) {
                         return x.first < y.first;
                     });

    double rank_sum_a = 0.0;
    double tie_sum = 0.0;  // sum of t^3 - t over tie groups
    std::size_t i = 0;
    while (i < total) {
        std::size_t j = i;
        while (j < total && all[j].first == all[i].first) ++j;
        const double t = static_cast<double>(j - i);
        const double avg_rank =
            0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        if (j - i > 1) tie_sum += t * t * t - t;
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].second == 0) rank_sum_a += avg_rank;
        }
        i = j;
    }

    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);
    const double dt = static_cast<double>(total);
    const double u = rank_sum_a - 0.5 * dn * (dn + 1.0);
    const double mean = 0.5 * dn * dm;
    const double var =
        dn * dm / 12.0 * ((dt + 1.0) - tie_sum / (dt * (dt - 1.0)));
    if (!(var > 0.0)) {
        throw DegenerateVariance("every observation ties; U has no spread");
    }
    const double z = (u - mean + 0.5) / std::sqrt(var);
    const double p = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return MannWhitneyResult{u, p};
}

// ---------------------------------------------------------------------------
// Report assembly

BenchReport make_report(const std::vector<TrialTrace>& traces,
                        const std::string& baseline) {
    if (traces.empty()) throw ConfigError("report needs at least one trace");
    BenchReport report;
    report.baseline = baseline;

    std::vector<std::string> order;
    std::map<std::string, std::vector<const TrialTrace*>> groups;
    std::size_t max_len = 0;
    for (const TrialTrace& t : traces) {
        if (groups.find(t.algorithm) == groups.end()) {
            order.push_back(t.algorithm);
        }
        groups[t.algorithm].push_back(&t);
        max_len = std::max(max_len, t.events.size());
    }
    for (std::size_t i = 1; i <= max_len; ++i) {
        report.index_grid.push_back(static_cast<std::int64_t>(i));
    }

    for (const std::string& algo : order) {
        std::vector<double> reached;
        for (const TrialTrace* t : groups[algo]) {
            if (t->samples_to_target) {
                reached.push_back(static_cast<double>(*t->samples_to_target));
            }
        }
        report.samples_reached[algo] = std::move(reached);
    }

    std::optional<double> base_median;
    if (const auto it = report.samples_reached.find(baseline);
        it != report.samples_reached.end() && !it->second.empty()) {
        base_median = median_of(it->second);
    }

    for (const std::string& algo : order) {
        AlgorithmSummary s;
        s.algorithm = algo;
        s.trials = static_cast<int>(groups[algo].size());
        const std::vector<double>& reached = report.samples_reached.at(algo);
        s.reached_target = static_cast<int>(reached.size());
        if (!reached.empty()) s.samples = quartiles_of(reached);
        if (base_median && s.samples) {
            s.speedup_vs_baseline = *base_median / s.samples->median;
        }
        report.algorithms.push_back(std::move(s));
    }

    for (const std::string& algo : order) {
        std::vector<const TrialTrace*> with_events;
        for (const TrialTrace* t : groups[algo]) {
            if (!t->events.empty()) with_events.push_back(t);
        }
        if (with_events.empty()) continue;
        std::vector<double> curve(max_len, 0.0);
        for (std::size_t i = 0; i < max_len; ++i) {
            double sum = 0.0;
            for (const TrialTrace* t : with_events) {
                const std::size_t last = t->events.size() - 1;
                sum += t->events[std::min(i, last)].best_so_far;
            }
            curve[i] = sum / static_cast<double>(with_events.size());
        }
        report.mean_best[algo] = std::move(curve);
    }
    return report;
}

// ---------------------------------------------------------------------------
// SVG charts

namespace {

constexpr const char* kPalette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                     "#d62728", "#9467bd", "#8c564b",
                                     "#e377c2", "#7f7f7f"};

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string fmt2(double v) { return fmt_fixed(v, 2); }

std::string svg_open() {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 "
           "400\" font-family=\"monospace\" font-size=\"12\">\n"
           "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" "
           "fill=\"#ffffff\"/>\n";
}

std::string svg_line(double ax, double ay, double bx, double by,
                     const char* stroke) {
    return "<line x1=\"" + fmt2(ax) + "\" y1=\"" + fmt2(ay) + "\" x2=\"" +
           fmt2(bx) + "\" y2=\"" + fmt2(by) + "\" stroke=\"" + stroke +
           "\"/>\n";
}

std::string svg_text(double x, double y, const std::string& anchor,
                     const std::string& body) {
    std::string s = "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\"";
    if (!anchor.empty()) s += " text-anchor=\"" + anchor + "\"";
    return s + ">" + body + "</text>\n";
}

// Pads a value range so curves never hug the frame; degenerate ranges get
// a fixed margin.
void pad_range(double& lo, double& hi, double flat_margin) {
    if (hi - lo < 1e-9) {
        lo -= flat_margin;
        hi += flat_margin;
    } else {
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
}

}  // namespace

std::string progression_svg(const BenchReport& report) {
    constexpr double x0 = 60, x1 = 470, y0 = 20, y1 = 350;
    std::string s = svg_open();

    std::vector<std::string> algos;
    for (const AlgorithmSummary& a : report.algorithms) {
        if (report.mean_best.count(a.algorithm) != 0) {
            algos.push_back(a.algorithm);
        }
    }
    if (algos.empty() || report.index_grid.empty()) {
        s += svg_text(320, 200, "middle", "no events to plot");
        s += "</svg>\n";
        return s;
    }

    const double n = static_cast<double>(report.index_grid.size());
    double lo = 1e300;
    double hi = -1e300;
    for (const std::string& algo : algos) {
        for (const double v : report.mean_best.at(algo)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    pad_range(lo, hi, 0.05);

    const auto X = [&](double idx) {
        return n > 1.0 ? x0 + (idx - 1.0) / (n - 1.0) * (x1 - x0)
                       : 0.5 * (x0 + x1);
    };
    const auto Y = [&](double v) {
        return y1 - (v - lo) / (hi - lo) * (y1 - y0);
    };

    s += svg_line(x0, y0, x0, y1, "#000000");
    s += svg_line(x0, y1, x1, y1, "#000000");
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        s += svg_line(x0 - 4, Y(v), x0, Y(v), "#000000");
        s += svg_text(x0 - 8, Y(v) + 4, "end", fmt_fixed(v, 3));
    }
    std::set<long long> drawn;
    for (int i = 0; i <= 4; ++i) {
        const long long idx = 1 + std::llround(i * (n - 1.0) / 4.0);
        if (!drawn.insert(idx).second) continue;
        const double x = X(static_cast<double>(idx));
        s += svg_line(x, y1, x, y1 + 4, "#000000");
        s += svg_text(x, y1 + 16, "middle", std::to_string(idx));
    }
    s += svg_text(0.5 * (x0 + x1), 388, "middle", "unique evaluations");
    s += "<text transform=\"rotate(-90 14 185)\" x=\"14\" y=\"185\" "
         "text-anchor=\"middle\">mean best accuracy</text>\n";

    for (std::size_t ai = 0; ai < algos.size(); ++ai) {
        const std::vector<double>& curve = report.mean_best.at(algos[ai]);
        std::string pts;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if (!pts.empty()) pts += " ";
            pts += fmt2(X(static_cast<double>(i + 1))) + "," +
                   fmt2(Y(curve[i]));
        }
        const char* color = kPalette[ai % 8];
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        s += "<circle cx=\"" + fmt2(X(n)) + "\" cy=\"" +
             fmt2(Y(curve.back())) + "\" r=\"2\" fill=\"" + color + "\"/>\n";
    }
    for (std::size_t ai = 0; ai < algos.size(); ++ai) {
        const double ly = 30 + 18 * static_cast<double>(ai);
        s += "<rect x=\"482\" y=\"" + fmt2(ly - 9) +
             "\" width=\"10\" height=\"10\" fill=\"" + kPalette[ai % 8] +
             "\"/>\n";
        s += svg_text(496, ly, "", algos[ai]);
    }
    s += "</svg>\n";
    return s;
}

std::string boxplot_svg(const BenchReport& report) {
    constexpr double x0 = 60, x1 = 620, y0 = 20, y1 = 350;
    std::string s = svg_open();

    std::vector<std::string> algos;
    for (const AlgorithmSummary& a : report.algorithms) {
        const auto it = report.samples_reached.find(a.algorithm);
        if (it != report.samples_reached.end() && !it->second.empty()) {
            algos.push_back(a.algorithm);
        }
    }
    if (algos.empty()) {
        s += svg_text(320, 200, "middle", "no trial reached the target");
        s += "</svg>\n";
        return s;
    }

    double lo = 1e300;
    double hi = -1e300;
    for (const std::string& algo : algos) {
        for (const double v : report.samples_reached.at(algo)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    pad_range(lo, hi, 1.0);
    const auto Y = [&](double v) {
        return y1 - (v - lo) / (hi - lo) * (y1 - y0);
    };

    s += svg_line(x0, y0, x0, y1, "#000000");
    s += svg_line(x0, y1, x1, y1, "#000000");
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        s += svg_line(x0 - 4, Y(v), x0, Y(v), "#000000");
        s += svg_text(x0 - 8, Y(v) + 4, "end", fmt_fixed(v, 1));
    }
    s += "<text transform=\"rotate(-90 14 185)\" x=\"14\" y=\"185\" "
         "text-anchor=\"middle\">samples to target</text>\n";

    const double slot =
        (x1 - x0) / static_cast<double>(algos.size());
    const double half = std::min(40.0, 0.3 * slot);
    for (std::size_t ai = 0; ai < algos.size(); ++ai) {
        const std::vector<double>& raw = report.samples_reached.at(algos[ai]);
        const Quartiles q = quartiles_of(raw);
        const double vmin = *std::min_element(raw.begin(), raw.end());
        const double vmax = *std::max_element(raw.begin(), raw.end());
        const double cx = x0 + (static_cast<double>(ai) + 0.5) * slot;

        s += svg_line(cx, Y(vmin), cx, Y(q.q1), "#333333");
        s += svg_line(cx, Y(q.q3), cx, Y(vmax), "#333333");
        s += svg_line(cx - 0.6 * half, Y(vmin), cx + 0.6 * half, Y(vmin),
                      "#333333");
        s += svg_line(cx - 0.6 * half, Y(vmax), cx + 0.6 * half, Y(vmax),
                      "#333333");
        s += "<rect x=\"" + fmt2(cx - half) + "\" y=\"" + fmt2(Y(q.q3)) +
             "\" width=\"" + fmt2(2 * half) + "\" height=\"" +
             fmt2(std::max(0.0, Y(q.q1) - Y(q.q3))) +
             "\" fill=\"#9ecae1\" stroke=\"#333333\"/>\n";
        s += svg_line(cx - half, Y(q.median), cx + half, Y(q.median),
                      "#d62728");
        s += svg_text(cx, y1 + 16, "middle", algos[ai]);
    }
    s += "</svg>\n";
    return s;
}

// ---------------------------------------------------------------------------
// File emission

namespace {

std::string trials_csv(const std::vector<TrialTrace>& traces) {
    std::string s =
        "algorithm,seed,unique_eval_index,encoding,accuracy,best_so_far,"
        "cumulative_cost_epochs\n";
    for (const TrialTrace& t : traces) {
        for (const TraceEvent& e : t.events) {
            s += t.algorithm + "," + std::to_string(t.seed) + "," +
                 std::to_string(e.unique_eval_index) + "," +
                 e.encoding.text() + "," + format_double(e.accuracy) + "," +
                 format_double(e.best_so_far) + "," +
                 std::to_string(e.cumulative_cost_epochs) + "\n";
        }
    }
    return s;
}

std::string summary_csv(const BenchReport& report) {
    std::string s =
        "algorithm,trials,reached_target,q1_samples,median_samples,"
        "q3_samples,speedup_vs_" +
        report.baseline + "\n";
    for (const AlgorithmSummary& a : report.algorithms) {
        s += a.algorithm + "," + std::to_string(a.trials) + "," +
             std::to_string(a.reached_target) + ",";
        if (a.samples) {
            s += format_double(a.samples->q1) + "," +
                 format_double(a.samples->median) + "," +
                 format_double(a.samples->q3);
        } else {
            s += ",,";
        }
        s += ",";
        if (a.speedup_vs_baseline) {
            s += format_double(*a.speedup_vs_baseline);
        }
        s += "\n";
    }
    return s;
}

std::string meta_json(const std::vector<TrialTrace>& traces,
                      const BenchReport& report, const EmitOptions& opt) {
    nlohmann::json runs = nlohmann::json::array();
    for (const AlgorithmSummary& a : report.algorithms) {
        const TrialTrace* first = nullptr;
        for (const TrialTrace& t : traces) {
            if (t.algorithm == a.algorithm) {
                first = &t;
                break;
            }
        }
        nlohmann::json r;
        r["algorithm"] = a.algorithm;
        r["base_seed"] = first->seed;
        r["config_hash"] = first->config_hash;
        r["trials"] = a.trials;
        runs.push_back(std::move(r));
    }
    const auto now_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now()
                                .time_since_epoch())
                            .count();
    nlohmann::json j;
    j["baseline"] = report.baseline;
    j["generated_unix_ms"] = now_ms;
    j["library_version"] = kLibraryVersion;
    j["protocol_version"] = kProtocolVersion;
    j["runs"] = std::move(runs);
    j["snapshot_format_version"] = 1;
    j["wall_ms"] = opt.wall_ms;
    return j.dump(2) + "\n";
}

void write_or_throw(const std::string& path, const std::string& body) {
    try {
        write_file_atomic(path, body);
    } catch (const std::exception& e) {
        throw IoError("cannot write " + path + ": " + e.what());
    }
}

}  // namespace

void emit_report(const std::vector<TrialTrace>& traces,
                 const std::string& out_dir, const EmitOptions& opt) {
    const BenchReport report = make_report(traces, opt.baseline);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir +
                      (ec ? ": " + ec.message() : ""));
    }

    write_or_throw(out_dir + "/trials.csv", trials_csv(traces));
    write_or_throw(out_dir + "/summary.csv", summary_csv(report));
    write_or_throw(out_dir + "/meta.json", meta_json(traces, report, opt));
    if (opt.svg) {
        write_or_throw(out_dir + "/progression.svg", progression_svg(report));
        write_or_throw(out_dir + "/boxplot.svg", boxplot_svg(report));
    }
}

}  // namespace archsearch
