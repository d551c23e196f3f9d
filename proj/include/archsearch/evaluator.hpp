#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "archsearch/space.hpp"
#include "archsearch/space_enum.hpp"

namespace archsearch {

// Simulated training prices, in epochs: a fresh evaluation trains the full
// schedule; one warm-started from a previously evaluated ancestor trains the
// short one.
struct TransferCostModel {
    int full_epochs = 70;
    int transfer_epochs = 20;
};

// Outcome of one true evaluation.
struct Evaluation {
    double accuracy = 0.0;
    int cost_epochs = 0;
    bool from_transfer = false;
};

inline Evaluation make_evaluation(double accuracy, bool from_transfer,
                                  const TransferCostModel& cost = {}) {
    return {accuracy,
            from_transfer ? cost.transfer_epochs : cost.full_epochs,
            from_transfer};
}

// Running totals over a run. Warm starts change only the price of an
// evaluation, never its accuracy, so the ledger is the whole story of what
// transfer buys.
struct CostLedger {
    std::int64_t evaluations = 0;
    std::int64_t transferred = 0;
    std::int64_t epochs = 0;  // sum of recorded cost_epochs

    void record(const Evaluation& e) {
        ++evaluations;
        if (e.from_transfer) ++transferred;
        epochs += e.cost_epochs;
    }
    std::int64_t epochs_without_transfer(
        const TransferCostModel& cost = {}) const {
        return static_cast<std::int64_t>(cost.full_epochs) * evaluations;
    }
};

// ---------------------------------------------------------------------------
// Synthetic oracle

struct SyntheticOracleConfig {
    std::uint64_t seed = 0;
    double w_depth = 0.20;
    double w_ops = 0.15;
    double w_noise = 0.10;
    double w_edges = 0.05;
    SpaceLimits limits;  // dag domain only
};

// 24-bit noise in [0,1): FNV-1a over the encoding text bytes followed by the
// eight little-endian seed bytes. The 2^24 resolution keeps u exactly
// representable in a double on every platform.
double synthetic_noise(const std::string& encoding_text, std::uint64_t seed);

// Deterministic stand-in for a trained accuracy:
//   clamp01(0.50 + w_depth*L/(max_nodes-1) + w_ops*D/num_op_types
//           - w_edges*E/E_max + w_noise*u)
// with L the longest input->output path in edges, D the number of distinct
// intermediate op types, E the edge count, E_max = max_nodes*(max_nodes-1)/2.
// The result is quantized to 1e-6 (half-up) so the 6-decimal CSV export is
// lossless and table/oracle round trips are bit-exact.
// Throws IncompleteArchitecture.
double synthetic_accuracy(const DagArchitecture& arch,
                          const SyntheticOracleConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluators

// Ground truth for complete architectures, keyed by encoding. Immutable after
// construction; safe for concurrent queries.
class Evaluator {
public:
    virtual ~Evaluator() = default;

    // Accuracy of a complete architecture. Throws IncompleteArchitecture for
    // non-evaluable states and NotInTable for a table miss.
    virtual double accuracy_of(const EncodedArch& enc) const = 0;

    virtual const SpaceLimits& limits() const = 0;

    // Argmax entry when cheaply known (tabular); the synthetic oracle answers
    // nullopt and callers brute-force the optimum instead.
    virtual std::optional<std::pair<EncodedArch, double>> best() const = 0;
};

class SyntheticEvaluator final : public Evaluator {
public:
    // Throws ConfigError unless cfg.limits names the dag domain.
    explicit SyntheticEvaluator(SyntheticOracleConfig cfg);

    double accuracy_of(const EncodedArch& enc) const override;
    const SpaceLimits& limits() const override { return cfg_.limits; }
    std::optional<std::pair<EncodedArch, double>> best() const override {
        return std::nullopt;
    }

    const SyntheticOracleConfig& config() const { return cfg_; }

private:
    SyntheticOracleConfig cfg_;
};

// Precomputed encoding -> accuracy map loaded from CSV
// (header "encoding,accuracy", rows "<d0>-<d1>-...,<decimal float>").
class TabularBenchmark final : public Evaluator {
public:
    // Throws ParseError / InvalidEncoding / AccuracyOutOfRange / DuplicateKey,
    // each tagged with the 1-based line number.
    static TabularBenchmark load(const std::string& path,
                                 const SpaceLimits& limits);

    // A miss is fatal by contract: it means the search space and the table
    // disagree, and a silent zero would corrupt benchmark statistics.
    double accuracy_of(const EncodedArch& enc) const override;
    const SpaceLimits& limits() const override { return limits_; }
    std::optional<std::pair<EncodedArch, double>> best() const override {
        return std::make_pair(best_enc_, best_acc_);
    }

    std::size_t size() const { return table_.size(); }
    const std::map<EncodedArch, double>& table() const { return table_; }
    const std::string& source() const { return source_; }

private:
    TabularBenchmark() = default;

    SpaceLimits limits_;
    std::map<EncodedArch, double> table_;
    std::string source_;  // provenance note: the path it was loaded from
    EncodedArch best_enc_;
    double best_acc_ = 0.0;
};

// ---------------------------------------------------------------------------
// Export and brute force

// CSV of the whole complete space under cfg.limits, rows in enumeration
// order, accuracies with 6 decimal digits (exact, thanks to quantization).
std::string synthetic_table_csv(const SyntheticOracleConfig& cfg,
                                const EnumerateOptions& opts = {});

void export_synthetic_table(const SyntheticOracleConfig& cfg,
                            const std::string& path,
                            const EnumerateOptions& opts = {});

// Exhaustive argmax over the complete space. Ties (possible only between
// equal quantized accuracies) go to the lexicographically smallest encoding,
// matching TabularBenchmark's best rule.
std::pair<EncodedArch, double> brute_force_optimum(
    const SyntheticOracleConfig& cfg, const EnumerateOptions& opts = {});

// Evaluator factory for CLI-style specs: "synthetic", "synthetic:<seed>", or
// "tabular:<path>". Throws ConfigError on anything else.
std::unique_ptr<Evaluator> make_evaluator(const std::string& spec,
                                          const SpaceLimits& limits);

}  // namespace archsearch
