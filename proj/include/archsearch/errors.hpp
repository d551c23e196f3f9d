#pragma once

#include <stdexcept>
#include <string>

namespace archsearch {

// Exit codes used by the CLI. Library code throws the typed errors below;
// the CLI maps them onto these codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfigError = 2,
    kExitEvaluatorMismatch = 3,
    kExitProtocolError = 4,
    kExitSnapshotError = 5,
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IllegalAction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidEncoding : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LengthMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpaceTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IncompleteArchitecture : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tabular evaluator asked about an architecture missing from its table.
// Fatal by contract: it signals a space/table configuration mismatch.
struct NotInTable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tabular CSV ingestion diagnostics; all are configuration faults, so they
// derive from ConfigError and map to the config-error exit code.
struct ParseError : ConfigError {
    using ConfigError::ConfigError;
};

struct AccuracyOutOfRange : ConfigError {
    using ConfigError::ConfigError;
};

struct DuplicateKey : ConfigError {
    using ConfigError::ConfigError;
};

struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyDataset : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateVariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyPredictions : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AlreadyExpanded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SnapshotError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VersionMismatch : SnapshotError {
    using SnapshotError::SnapshotError;
};

struct CorruptSnapshot : SnapshotError {
    using SnapshotError::SnapshotError;
};

struct UnknownOutcome : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Report emission failures (unwritable directory, full disk); the CLI maps
// this to the config-error exit code since it is an operator input problem.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace archsearch
