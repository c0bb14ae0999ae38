#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "olrbench/data.hpp"
#include "olrbench/learners.hpp"

namespace olrbench {

template <typename DerivedP, typename DerivedT>
double mse(const Eigen::MatrixBase<DerivedP>& predictions, const Eigen::MatrixBase<DerivedT>& targets)
{
    if (predictions.size() != targets.size())
        throw ValidationError(Stage::evaluation, "mse: length mismatch");
    if (predictions.size() == 0)
        throw ValidationError(Stage::evaluation, "mse: empty input");
    return (predictions.template cast<double>() - targets.template cast<double>()).squaredNorm() /
           static_cast<double>(predictions.size());
}

/// Test-fold MSE recorded after each of the first K mini-batch updates.
struct MseTrace {
    std::string learner;
    std::string dataset;
    Index fold = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;
    bool diverged = false;
    Index diverged_at = -1;  // batch index whose update failed
    std::string message;
};

/// Initializes a learner, then for each of the first K batches: partial_fit,
/// followed by the test-set MSE. A divergence truncates the trace.
MseTrace prequential_run(const LearnerConfig& config, const MiniBatchStream& stream, const MatrixXd& test_features,
                         const VectorXd& test_targets, Index first_batches);

/// Convenience form on explicit train/test datasets; the stream is shuffled with `seed`.
MseTrace prequential_run(const LearnerConfig& config, const Dataset& train, const Dataset& test, Index batch_size,
                         Index first_batches, std::uint64_t seed);

struct CellScore {
    double value = 0.0;
    bool diverged = false;
    Index traces_used = 0;
    Index traces_diverged = 0;
};

/// Mean over every (fold, seed, batch <= K) MSE of the non-diverged traces.
CellScore aggregate_cell(std::span<const MseTrace> traces, Index first_batches);

/// models x datasets grid of aggregated scores.
struct ScoreMatrix {
    std::vector<std::string> models;
    std::vector<std::string> datasets;
    MatrixXd scores;  // k x N
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> diverged;
    Index first_batches = 10;
    Index folds = 5;
    std::vector<std::uint64_t> seeds;

    Index n_models() const noexcept { return scores.rows(); }
    Index n_datasets() const noexcept { return scores.cols(); }
    bool any_diverged() const { return diverged.size() > 0 && diverged.any(); }
};

struct DatasetPlan {
    Dataset data;
    Index batch_size = 10;
    ScalePolicy scaling = ScalePolicy::none;
};

struct LearnerPlan {
    std::string name;
    LearnerConfig config;
    std::map<std::string, LearnerConfig> overrides;  // keyed by dataset name

    const LearnerConfig& config_for(const std::string& dataset) const
    {
        auto it = overrides.find(dataset);
        return it == overrides.end() ? config : it->second;
    }
};

struct Protocol {
    Index folds = 5;
    Index first_batches = 10;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct RunPlan {
    std::vector<DatasetPlan> datasets;
    std::vector<LearnerPlan> learners;
    Protocol protocol;
};

struct EvaluationResult {
    ScoreMatrix matrix;
    std::vector<MseTrace> traces;  // ordered by (learner, dataset, seed, fold)
    std::vector<std::string> warnings;
};

/// Runs every (learner, dataset, seed, fold) cell. Cells sharing a
/// (dataset, seed, fold) reuse one split; results land in slots keyed by the
/// cell so the grid does not depend on `workers`.
EvaluationResult build_score_matrix(const RunPlan& plan, unsigned workers = 1);

} // namespace olrbench
