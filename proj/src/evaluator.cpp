#include "archsearch/evaluator.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include "archsearch/util.hpp"

namespace archsearch {

double synthetic_noise(const std::string& encoding_text, std::uint64_t seed) {
    std::uint64_t h = fnv1a64(encoding_text);
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) {
        le[i] = static_cast<unsigned char>((seed >> (8 * i)) & 0xFF);
    }
    h = fnv1a64_bytes(le, 8, h);
    return static_cast<double>(h & 0xFFFFFFULL) /
           static_cast<double>(1 << 24);
}

double synthetic_accuracy(const DagArchitecture& arch,
                          const SyntheticOracleConfig& cfg) {
    if (!arch.complete()) {
        throw IncompleteArchitecture(
            "synthetic oracle needs a complete architecture");
    }
    const int mn = arch.max_nodes();
    const int longest = *arch.longest_path();
    std::set<int> distinct;
    for (int node = 1; node < arch.num_nodes() - 1; ++node) {
        distinct.insert(arch.op(node));
    }
    const int e_max = mn * (mn - 1) / 2;
    const double u = synthetic_noise(encode(arch).text(), cfg.seed);
    double acc = 0.50 +
                 cfg.w_depth * longest / (mn - 1) +
                 cfg.w_ops * static_cast<double>(distinct.size()) /
                     arch.num_op_types() -
                 cfg.w_edges * arch.num_edges() / e_max +
                 cfg.w_noise * u;
    acc = std::min(1.0, std::max(0.0, acc));
    // Quantize to 1e-6 half-up; keeps the 6-decimal CSV export lossless.
    return std::floor(acc * 1e6 + 0.5) / 1e6;
}

// ---------------------------------------------------------------------------
// SyntheticEvaluator

SyntheticEvaluator::SyntheticEvaluator(SyntheticOracleConfig cfg)
    : cfg_(std::move(cfg)) {
    if (cfg_.limits.domain != Domain::dag) {
        throw ConfigError(
            "synthetic oracle is defined for the dag domain only");
    }
    if (cfg_.w_depth < 0 || cfg_.w_ops < 0 || cfg_.w_noise < 0 ||
        cfg_.w_edges < 0) {
        throw ConfigError("synthetic oracle weights must be nonnegative");
    }
}

double SyntheticEvaluator::accuracy_of(const EncodedArch& enc) const {
    ArchState state = decode(enc, cfg_.limits);
    return synthetic_accuracy(std::get<DagArchitecture>(state), cfg_);
}

// ---------------------------------------------------------------------------
// TabularBenchmark

namespace {

// Strict decimal-float parse: digits, sign, point, exponent; whole field
// consumed; finite value. Rejects the hex/inf/nan spellings strtod accepts.
bool parse_accuracy(const std::string& field, double* out) {
    if (field.empty()) return false;
    if (field.find_first_not_of("0123456789.+-eE") != std::string::npos) {
        return false;
    }
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || !std::isfinite(v)) {
        return false;
    }
    *out = v;
    return true;
}

std::string at_line(std::size_t line_no, const std::string& message) {
    return "line " + std::to_string(line_no) + ": " + message;
}

}  // namespace

TabularBenchmark TabularBenchmark::load(const std::string& path,
                                        const SpaceLimits& limits) {
    std::string content;
    try {
        content = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    // Tolerate a UTF-8 byte-order mark and CRLF line ends.
    if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        content.erase(0, 3);
    }

    TabularBenchmark bench;
    bench.limits_ = limits;
    bench.source_ = path;

    std::vector<std::string> lines = split(content, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();

    if (lines.empty()) throw ParseError(at_line(1, "missing header"));
    for (auto& line : lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    }
    if (lines[0] != "encoding,accuracy") {
        throw ParseError(at_line(1, "expected header \"encoding,accuracy\", got \"" +
                                        lines[0] + "\""));
    }

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::vector<std::string> fields = split(lines[i], ',');
        if (fields.size() != 2) {
            throw ParseError(at_line(
                line_no, "expected 2 comma-separated fields, got " +
                             std::to_string(fields.size())));
        }

        EncodedArch enc;
        try {
            enc = EncodedArch::from_text(fields[0]);
            const ArchState state = decode(enc, limits);
            const ValidationReport report = validate(state, limits);
            if (!report.ok()) {
                const std::string& why = report.bound_violations.empty()
                                             ? report.completeness_violations[0]
                                             : report.bound_violations[0];
                throw InvalidEncoding(why);
            }
        } catch (const InvalidEncoding& e) {
            throw InvalidEncoding(at_line(line_no, e.what()));
        } catch (const LengthMismatch& e) {
            throw InvalidEncoding(at_line(line_no, e.what()));
        }

        double acc = 0.0;
        if (!parse_accuracy(fields[1], &acc)) {
            throw ParseError(
                at_line(line_no, "bad accuracy value \"" + fields[1] + "\""));
        }
        if (acc < 0.0 || acc > 1.0) {
            throw AccuracyOutOfRange(at_line(
                line_no, "accuracy " + format_double(acc) + " outside [0,1]"));
        }

        if (!bench.table_.emplace(enc, acc).second) {
            throw DuplicateKey(
                at_line(line_no, "duplicate encoding " + fields[0]));
        }
        if (bench.table_.size() == 1 || acc > bench.best_acc_ ||
            (acc == bench.best_acc_ && enc < bench.best_enc_)) {
            bench.best_acc_ = acc;
            bench.best_enc_ = enc;
        }
    }

    if (bench.table_.empty()) {
        throw ParseError(at_line(lines.size(), "no data rows"));
    }
    return bench;
}

double TabularBenchmark::accuracy_of(const EncodedArch& enc) const {
    const auto it = table_.find(enc);
    if (it == table_.end()) {
        throw NotInTable("encoding " + enc.text() + " not in table " +
                         source_);
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Export and brute force

std::string synthetic_table_csv(const SyntheticOracleConfig& cfg,
                                const EnumerateOptions& opts) {
    SyntheticEvaluator oracle(cfg);
    std::string csv = "encoding,accuracy\n";
    enumerate_space(cfg.limits, opts, [&](const DagArchitecture& arch) {
        csv += encode(arch).text();
        csv += ',';
        csv += format_fixed(synthetic_accuracy(arch, cfg), 6);
        csv += '\n';
    });
    return csv;
}

void export_synthetic_table(const SyntheticOracleConfig& cfg,
                            const std::string& path,
                            const EnumerateOptions& opts) {
    write_file_atomic(path, synthetic_table_csv(cfg, opts));
}

std::pair<EncodedArch, double> brute_force_optimum(
    const SyntheticOracleConfig& cfg, const EnumerateOptions& opts) {
    SyntheticEvaluator oracle(cfg);
    bool found = false;
    EncodedArch best_enc;
    double best_acc = 0.0;
    enumerate_space(cfg.limits, opts, [&](const DagArchitecture& arch) {
        const double acc = synthetic_accuracy(arch, cfg);
        const EncodedArch enc = encode(arch);
        if (!found || acc > best_acc ||
            (acc == best_acc && enc < best_enc)) {
            found = true;
            best_acc = acc;
            best_enc = enc;
        }
    });
    if (!found) throw ConfigError("space has no complete architecture");
    return {best_enc, best_acc};
}

std::unique_ptr<Evaluator> make_evaluator(const std::string& spec,
                                          const SpaceLimits& limits) {
    const std::size_t colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg =
        colon == std::string::npos ? std::string() : spec.substr(colon + 1);

    if (kind == "synthetic") {
        SyntheticOracleConfig cfg;
        cfg.limits = limits;
        if (!arg.empty()) {
            char* end = nullptr;
            cfg.seed = std::strtoull(arg.c_str(), &end, 10);
            if (end != arg.c_str() + arg.size()) {
                throw ConfigError("bad synthetic oracle seed \"" + arg + "\"");
            }
        }
        return std::make_unique<SyntheticEvaluator>(cfg);
    }
    if (kind == "tabular") {
        if (arg.empty()) {
            throw ConfigError("tabular evaluator needs a file path");
        }
        return std::make_unique<TabularBenchmark>(
            TabularBenchmark::load(arg, limits));
    }
    throw ConfigError("unknown evaluator spec \"" + spec +
                      "\" (want synthetic[:seed] or tabular:path)");
}

}  // namespace archsearch
