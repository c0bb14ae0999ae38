#include "olrbench/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace olrbench {

MseTrace prequential_run(const LearnerConfig& config, const MiniBatchStream& stream, const MatrixXd& test_features,
                         const VectorXd& test_targets, Index first_batches)
{
    if (first_batches < 1)
        throw ValidationError(Stage::evaluation, "prequential_run: K must be >= 1");
    MseTrace trace;
    trace.learner = std::string(to_string(config.algorithm));
    trace.seed = stream.seed();

    auto state = init<double>(config, test_features.cols());
    const Index count = std::min(first_batches, stream.size());
    trace.values.reserve(static_cast<std::size_t>(count));
    for (Index b = 0; b < count; ++b) {
        const MiniBatch batch = stream.batch(b);
        try {
            partial_fit(state, batch.features, batch.targets, config);
        } catch (const DivergenceError& e) {
            trace.diverged = true, trace.diverged_at = b, trace.message = e.what();
            break;
        } catch (const ConditioningError& e) {
            trace.diverged = true, trace.diverged_at = b, trace.message = e.what();
            break;
        }
        const double value = mse(predict(state, test_features), test_targets);
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << to_string(config.algorithm) << " diverged: test MSE is not finite (eta=" << config.eta << ")";
            trace.diverged = true, trace.diverged_at = b, trace.message = msg.str();
            break;
        }
        trace.values.push_back(value);
    }
    return trace;
}

MseTrace prequential_run(const LearnerConfig& config, const Dataset& train, const Dataset& test, Index batch_size,
                         Index first_batches, std::uint64_t seed)
{
    if (train.dims() != test.dims())
        throw ValidationError(Stage::evaluation, "prequential_run: train/test feature widths differ");
    std::vector<Index> rows(static_cast<std::size_t>(train.rows()));
    std::iota(rows.begin(), rows.end(), Index{0});
    MiniBatchStream stream(train, std::move(rows), batch_size, seed);
    auto trace = prequential_run(config, stream, test.features, test.targets, first_batches);
    trace.dataset = train.name;
    return trace;
}

CellScore aggregate_cell(std::span<const MseTrace> traces, Index first_batches)
{
    CellScore cell;
    double sum = 0.0;
    Index count = 0;
    for (const auto& trace : traces) {
        if (trace.diverged) {
            ++cell.traces_diverged;
            continue;
        }
        const auto n = std::min<std::size_t>(trace.values.size(), static_cast<std::size_t>(first_batches));
        for (std::size_t i = 0; i < n; ++i)
            sum += trace.values[i];
        count += static_cast<Index>(n);
        ++cell.traces_used;
    }
    if (cell.traces_used == 0 || count == 0) {
        cell.diverged = true;
        cell.value = std::numeric_limits<double>::quiet_NaN();
        return cell;
    }
    cell.value = sum / static_cast<double>(count);
    return cell;
}

namespace {

struct SplitContext {
    std::size_t dataset;
    std::size_t seed;
    Index fold;
};

} // namespace

EvaluationResult build_score_matrix(const RunPlan& plan, unsigned workers)
{
    const auto& protocol = plan.protocol;
    if (plan.learners.empty() || plan.datasets.empty())
        throw ValidationError(Stage::evaluation, "run plan needs at least one learner and one dataset");
    if (protocol.seeds.empty())
        throw ValidationError(Stage::evaluation, "run plan needs at least one seed");
    if (protocol.first_batches < 1)
        throw ValidationError(Stage::evaluation, "first_batches must be >= 1");

    const std::size_t n_learners = plan.learners.size();
    const std::size_t n_datasets = plan.datasets.size();
    const std::size_t n_seeds = protocol.seeds.size();
    const auto n_folds = static_cast<std::size_t>(protocol.folds);

    for (const auto& ds : plan.datasets) {
        ds.data.validate();
        if (ds.data.rows() < protocol.folds)
            throw ValidationError(Stage::evaluation, "dataset '" + ds.data.name + "' has fewer rows than folds");
        for (const auto& learner : plan.learners)
            learner.config_for(ds.data.name).validate();
    }

    std::vector<SplitContext> contexts;
    for (std::size_t d = 0; d < n_datasets; ++d)
        for (std::size_t s = 0; s < n_seeds; ++s)
            for (std::size_t f = 0; f < n_folds; ++f)
                contexts.push_back({d, s, static_cast<Index>(f)});

    // slot = ((learner * D + dataset) * S + seed) * F + fold
    std::vector<MseTrace> traces(n_learners * n_datasets * n_seeds * n_folds);
    std::vector<std::exception_ptr> errors(contexts.size());
    std::atomic<std::size_t> next{0};

    auto run_context = [&](std::size_t c) {
        const auto& ctx = contexts[c];
        const auto& ds = plan.datasets[ctx.dataset];
        const std::uint64_t seed = protocol.seeds[ctx.seed];
        const FoldPlan folds = kfold_split(ds.data, protocol.folds, seed);
        auto train_rows = folds.train_rows(ctx.fold);
        const auto test_rows = folds.test_rows(ctx.fold);
        const ScalerParams scaler = fit_scaler(ds.data, train_rows, ds.scaling);
        const MatrixXd test_x = apply_features(scaler, ds.data.features(test_rows, Eigen::all));
        const VectorXd test_y = apply_targets(scaler, ds.data.targets(test_rows));
        const MiniBatchStream stream(ds.data, std::move(train_rows), ds.batch_size,
                                     derive_seed(seed, static_cast<std::uint64_t>(ctx.fold)), scaler);
        for (std::size_t l = 0; l < n_learners; ++l) {
            const auto& learner = plan.learners[l];
            auto trace = prequential_run(learner.config_for(ds.data.name), stream, test_x, test_y,
                                         protocol.first_batches);
            trace.learner = learner.name;
            trace.dataset = ds.data.name;
            trace.fold = ctx.fold;
            trace.seed = seed;
            const std::size_t slot = ((l * n_datasets + ctx.dataset) * n_seeds + ctx.seed) * n_folds +
                                     static_cast<std::size_t>(ctx.fold);
            traces[slot] = std::move(trace);
        }
    };

    auto worker = [&] {
        for (std::size_t c = next++; c < contexts.size(); c = next++) {
            try {
                run_context(c);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };

    const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(contexts.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    EvaluationResult result;
    auto& m = result.matrix;
    m.first_batches = protocol.first_batches;
    m.folds = protocol.folds;
    m.seeds = protocol.seeds;
    for (const auto& l : plan.learners)
        m.models.push_back(l.name);
    for (const auto& d : plan.datasets)
        m.datasets.push_back(d.data.name);
    m.scores.resize(static_cast<Index>(n_learners), static_cast<Index>(n_datasets));
    m.diverged.resize(static_cast<Index>(n_learners), static_cast<Index>(n_datasets));

    const std::size_t per_cell = n_seeds * n_folds;
    for (std::size_t l = 0; l < n_learners; ++l) {
        for (std::size_t d = 0; d < n_datasets; ++d) {
            const std::span<const MseTrace> cell_traces(traces.data() + (l * n_datasets + d) * per_cell, per_cell);
            const CellScore cell = aggregate_cell(cell_traces, protocol.first_batches);
            const auto li = static_cast<Index>(l);
            const auto di = static_cast<Index>(d);
            m.scores(li, di) = cell.value;
            m.diverged(li, di) = cell.diverged;
            if (cell.diverged)
                result.warnings.push_back("cell " + m.models[l] + " x " + m.datasets[d] +
                                          " diverged on every fold and seed; excluded from ranking");
            else if (cell.traces_diverged > 0)
                result.warnings.push_back("cell " + m.models[l] + " x " + m.datasets[d] + ": " +
                                          std::to_string(cell.traces_diverged) + " of " + std::to_string(per_cell) +
                                          " runs diverged and were dropped from the average");
        }
    }
    result.traces = std::move(traces);
    return result;
}

} // namespace olrbench
