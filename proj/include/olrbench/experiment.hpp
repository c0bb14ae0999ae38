#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "olrbench/data.hpp"
#include "olrbench/evaluation.hpp"
#include "olrbench/learners.hpp"
#include "olrbench/stats.hpp"

namespace olrbench {

using Json = nlohmann::json;

struct CsvSource {
    std::string path;  // resolved against the config file's directory
    std::string target;
};

struct DatasetSpec {
    std::string name;
    std::variant<SyntheticSpec, CsvSource> source;
    Index batch_size = 10;
    std::optional<ScalePolicy> scaling;  // falls back to protocol.scaling
};

struct OutputPaths {
    std::string archive;
    std::string report;
    std::string scores;
    std::string traces;
    std::string diagram;
};

/// Complete experimental configuration, parsed from a JSON run-config file.
///
/// Top-level keys: "protocol" (folds, first_batches, seeds, scaling),
/// "stats" (alphas, critical_mode), "datasets" (name, batch_size, scaling and
/// either "synthetic" {data_points, dimensions, noise, seed, coef_range} or
/// "preset" ds1..ds4 or "csv" {path, target}), "learners" (name, algorithm,
/// eta, lambda, delta, C, epsilon, epochs, w_base, w_inc, and "overrides"
/// keyed by dataset name), "output" (archive, report, scores, traces,
/// diagram) and "workers".
struct RunConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<LearnerPlan> learners;
    Protocol protocol;
    ScalePolicy scaling = ScalePolicy::none;
    StatsOptions stats;
    OutputPaths output;
    unsigned workers = 1;
    Json echo;  // the config document as read

    /// Structural checks plus existence of every referenced CSV file.
    void validate() const;
};

RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Materializes datasets and learner configs into an executable plan.
RunPlan make_run_plan(const RunConfig& config);

struct ResultsArchive {
    std::string tool_version;
    std::string started_at;
    std::string finished_at;
    Json config;
    StatsOptions stats_options;
    std::vector<MseTrace> traces;
    ScoreMatrix matrix;
    SignificanceAnalysis analysis;
    std::vector<std::string> warnings;
};

/// data -> learners -> evaluation -> stats. `workers` = 0 uses config.workers.
/// When the stats stage fails, configured trace output is still written.
ResultsArchive run_experiment(const RunConfig& config, unsigned workers = 0);

Json to_json(const ScoreMatrix& matrix);
ScoreMatrix score_matrix_from_json(const Json& doc);
Json to_json(const SignificanceAnalysis& analysis);
Json to_json(const ResultsArchive& archive);
ResultsArchive archive_from_json(const Json& doc);

/// Serialized via a temporary sibling file and rename.
void write_archive(const ResultsArchive& archive, const std::filesystem::path& path);
ResultsArchive read_archive(const std::filesystem::path& path);

/// Recomputes the statistics from the embedded score matrix and throws
/// IntegrityError on any difference from the stored values.
void verify_archive(const ResultsArchive& archive);

/// Writes text to `path` through a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace olrbench
