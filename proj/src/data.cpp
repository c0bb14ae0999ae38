#include "olrbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace olrbench {

std::string_view to_string(Stage stage) noexcept
{
    switch (stage) {
    case Stage::config: return "config";
    case Stage::data: return "data";
    case Stage::learner: return "learner";
    case Stage::evaluation: return "evaluation";
    case Stage::stats: return "stats";
    case Stage::report: return "report";
    }
    return "unknown";
}

void SyntheticSpec::validate(Index n_folds) const
{
    if (n_dims < 1)
        throw ValidationError(Stage::data, "synthetic spec: n_dims must be >= 1, got " + std::to_string(n_dims));
    if (n_points < 2 * n_folds)
        throw ValidationError(Stage::data, "synthetic spec: n_points must be >= 2 * n_folds (" +
                                               std::to_string(2 * n_folds) + "), got " +
                                               std::to_string(n_points));
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw ValidationError(Stage::data, "synthetic spec: noise_sigma must be finite and >= 0");
    if (!(coef_min <= coef_max) || !std::isfinite(coef_min) || !std::isfinite(coef_max))
        throw ValidationError(Stage::data, "synthetic spec: coef_range must be a finite interval");
}

SyntheticSpec synthetic_preset(std::string_view name)
{
    // Data-points, dimensions and noise of the benchmark's synthetic rows.
    SyntheticSpec spec;
    if (name == "ds1") {
        spec.n_points = 1000, spec.n_dims = 3, spec.noise_sigma = 10, spec.seed = 1;
    } else if (name == "ds2") {
        spec.n_points = 10000, spec.n_dims = 20, spec.noise_sigma = 20, spec.seed = 2;
    } else if (name == "ds3") {
        spec.n_points = 10000, spec.n_dims = 200, spec.noise_sigma = 25, spec.seed = 3;
    } else if (name == "ds4") {
        spec.n_points = 50000, spec.n_dims = 500, spec.noise_sigma = 50, spec.seed = 4;
    } else {
        throw ValidationError(Stage::data, "unknown synthetic preset '" + std::string(name) +
                                               "' (expected ds1, ds2, ds3 or ds4)");
    }
    return spec;
}

void Dataset::validate() const
{
    if (features.rows() != targets.size())
        throw ValidationError(Stage::data, "dataset '" + name + "': " + std::to_string(features.rows()) +
                                               " feature rows but " + std::to_string(targets.size()) + " targets");
    if (!features.allFinite() || !targets.allFinite())
        throw ValidationError(Stage::data, "dataset '" + name + "' contains non-finite values");
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::string name)
{
    spec.validate(1);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> feature_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> coef_dist(spec.coef_min, spec.coef_max);
    std::normal_distribution<double> noise_dist(0.0, 1.0);

    SyntheticOrigin origin{spec, VectorXd(spec.n_dims), 0.0};
    for (Index j = 0; j < spec.n_dims; ++j)
        origin.coefficients(j) = coef_dist(rng);
    origin.intercept = coef_dist(rng);

    Dataset out;
    out.name = std::move(name);
    out.features.resize(spec.n_points, spec.n_dims);
    for (Index i = 0; i < spec.n_points; ++i)
        for (Index j = 0; j < spec.n_dims; ++j)
            out.features(i, j) = feature_dist(rng);

    out.targets = (out.features * origin.coefficients).array() + origin.intercept;
    if (spec.noise_sigma > 0.0)
        for (Index i = 0; i < spec.n_points; ++i)
            out.targets(i) += spec.noise_sigma * noise_dist(rng);

    out.feature_names.reserve(spec.n_dims);
    for (Index j = 0; j < spec.n_dims; ++j)
        out.feature_names.push_back("x" + std::to_string(j + 1));
    out.provenance = std::move(origin);
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) {
        auto first = cell.find_first_not_of(" \t\r");
        auto last = cell.find_last_not_of(" \t\r");
        cells.push_back(first == std::string::npos ? std::string{} : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

std::string cell_location(const std::string& source, std::size_t line_no, const std::string& column)
{
    return source + ":" + std::to_string(line_no) + " column '" + column + "'";
}

} // namespace

Dataset parse_csv(std::istream& in, const std::string& source, const CsvSchema& schema)
{
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            header = split_line(line);
            break;
        }
    }
    if (header.empty())
        throw IngestionError(source + ": empty file (no header row)");
    if (header.size() < 2)
        throw IngestionError(source + ": need at least one feature column and a target column");

    std::size_t target_col = header.size() - 1;
    if (!schema.target.empty()) {
        auto it = std::find(header.begin(), header.end(), schema.target);
        if (it == header.end())
            throw IngestionError(source + ": target column '" + schema.target + "' not found in header");
        target_col = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<double> values;
    std::size_t n_rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw IngestionError(source + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& text = cells[c];
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
                throw IngestionError(cell_location(source, line_no, header[c]) + ": non-numeric cell '" + text + "'");
            if (!std::isfinite(value))
                throw IngestionError(cell_location(source, line_no, header[c]) + ": non-finite cell '" + text + "'");
            values.push_back(value);
        }
        ++n_rows;
    }
    if (n_rows == 0)
        throw IngestionError(source + ": no data rows after header");

    const auto n_cols = header.size();
    const auto n = static_cast<Index>(n_rows);
    const auto d = static_cast<Index>(n_cols - 1);
    Dataset out;
    out.features.resize(n, d);
    out.targets.resize(n);
    for (Index i = 0; i < n; ++i) {
        Index j = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            double v = values[static_cast<std::size_t>(i) * n_cols + c];
            if (c == target_col)
                out.targets(i) = v;
            else
                out.features(i, j++) = v;
        }
    }
    for (std::size_t c = 0; c < n_cols; ++c)
        if (c != target_col)
            out.feature_names.push_back(header[c]);
    out.target_name = header[target_col];
    out.provenance = FileOrigin{source};
    return out;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema)
{
    std::ifstream in(path);
    if (!in)
        throw IngestionError(path + ": cannot open file");
    auto out = parse_csv(in, path, schema);
    return out;
}

void write_csv(const Dataset& dataset, std::ostream& out)
{
    for (Index j = 0; j < dataset.dims(); ++j) {
        auto idx = static_cast<std::size_t>(j);
        out << (idx < dataset.feature_names.size() ? dataset.feature_names[idx] : "x" + std::to_string(j + 1)) << ',';
    }
    out << dataset.target_name << '\n';
    out << std::setprecision(17);
    for (Index i = 0; i < dataset.rows(); ++i) {
        for (Index j = 0; j < dataset.dims(); ++j)
            out << dataset.features(i, j) << ',';
        out << dataset.targets(i) << '\n';
    }
}

std::string_view to_string(ScalePolicy policy) noexcept
{
    return policy == ScalePolicy::zscore ? "zscore" : "none";
}

ScalePolicy parse_scale_policy(std::string_view text)
{
    if (text == "zscore" || text == "z-score")
        return ScalePolicy::zscore;
    if (text == "none")
        return ScalePolicy::none;
    throw ValidationError(Stage::config, "unknown scaling policy '" + std::string(text) + "' (expected zscore or none)");
}

namespace {

double safe_scale(double stddev)
{
    return (std::isfinite(stddev) && stddev > 0.0) ? stddev : 1.0;
}

void require_fitted(const ScalerParams& params)
{
    if (!params.fitted)
        throw StateError(Stage::data, "scaler used before fit_scaler");
}

} // namespace

ScalerParams fit_scaler(const MatrixXd& features, const VectorXd& targets, ScalePolicy policy)
{
    if (features.rows() == 0 || features.rows() != targets.size())
        throw ValidationError(Stage::data, "fit_scaler: need a non-empty training set with matching targets");
    ScalerParams params;
    params.policy = policy;
    params.fitted = true;
    const auto d = features.cols();
    if (policy == ScalePolicy::none) {
        params.feature_location = VectorXd::Zero(d);
        params.feature_scale = VectorXd::Ones(d);
        return params;
    }
    const double n = static_cast<double>(features.rows());
    params.feature_location = features.colwise().mean().transpose();
    params.feature_scale.resize(d);
    for (Index j = 0; j < d; ++j) {
        double var = (features.col(j).array() - params.feature_location(j)).square().sum() / n;
        params.feature_scale(j) = safe_scale(std::sqrt(var));
    }
    params.target_location = targets.mean();
    params.target_scale = safe_scale(std::sqrt((targets.array() - params.target_location).square().sum() / n));
    return params;
}

ScalerParams fit_scaler(const Dataset& dataset, std::span<const Index> rows, ScalePolicy policy)
{
    std::vector<Index> idx(rows.begin(), rows.end());
    return fit_scaler(dataset.features(idx, Eigen::all), dataset.targets(idx), policy);
}

MatrixXd apply_features(const ScalerParams& params, const MatrixXd& features)
{
    require_fitted(params);
    if (params.policy == ScalePolicy::none)
        return features;
    return (features.rowwise() - params.feature_location.transpose()).array().rowwise() /
           params.feature_scale.transpose().array();
}

VectorXd apply_targets(const ScalerParams& params, const VectorXd& targets)
{
    require_fitted(params);
    if (params.policy == ScalePolicy::none)
        return targets;
    return (targets.array() - params.target_location) / params.target_scale;
}

MatrixXd invert_features(const ScalerParams& params, const MatrixXd& features)
{
    require_fitted(params);
    if (params.policy == ScalePolicy::none)
        return features;
    return (features.array().rowwise() * params.feature_scale.transpose().array()).matrix().rowwise() +
           params.feature_location.transpose();
}

VectorXd invert_targets(const ScalerParams& params, const VectorXd& targets)
{
    require_fitted(params);
    if (params.policy == ScalePolicy::none)
        return targets;
    return targets.array() * params.target_scale + params.target_location;
}

std::vector<Index> FoldPlan::test_rows(Index fold) const
{
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == fold)
            out.push_back(static_cast<Index>(i));
    return out;
}

std::vector<Index> FoldPlan::train_rows(Index fold) const
{
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != fold)
            out.push_back(static_cast<Index>(i));
    return out;
}

FoldPlan kfold_split(Index n_rows, Index k, std::uint64_t seed)
{
    if (k < 2)
        throw ValidationError(Stage::data, "kfold_split: k must be >= 2, got " + std::to_string(k));
    if (k > n_rows)
        throw ValidationError(Stage::data, "kfold_split: k = " + std::to_string(k) + " exceeds row count " +
                                               std::to_string(n_rows));
    std::vector<Index> perm(static_cast<std::size_t>(n_rows));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(perm.size(), 0);
    const Index base = n_rows / k;
    const Index extra = n_rows % k;
    std::size_t pos = 0;
    for (Index fold = 0; fold < k; ++fold) {
        const Index size = base + (fold < extra ? 1 : 0);
        for (Index i = 0; i < size; ++i)
            plan.assignments[static_cast<std::size_t>(perm[pos++])] = fold;
    }
    return plan;
}

MiniBatchStream::MiniBatchStream(const Dataset& source, std::vector<Index> train_rows, Index batch_size,
                                 std::uint64_t seed, std::optional<ScalerParams> scaler)
    : source_(&source), order_(std::move(train_rows)), batch_size_(batch_size), n_batches_(0), seed_(seed),
      scaler_(std::move(scaler))
{
    if (batch_size_ < 1)
        throw ValidationError(Stage::data, "minibatch_stream: batch_size must be >= 1");
    if (order_.empty())
        throw ValidationError(Stage::data, "minibatch_stream: empty training set");
    if (scaler_ && !scaler_->fitted)
        throw StateError(Stage::data, "minibatch_stream: scaler is not fitted");
    for (Index row : order_)
        if (row < 0 || row >= source.rows())
            throw ValidationError(Stage::data, "minibatch_stream: row index out of range");
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
    const auto n = static_cast<Index>(order_.size());
    n_batches_ = (n + batch_size_ - 1) / batch_size_;
}

MiniBatch MiniBatchStream::batch(Index i) const
{
    if (i < 0 || i >= n_batches_)
        throw ValidationError(Stage::data, "minibatch_stream: batch index " + std::to_string(i) + " out of range");
    const auto begin = static_cast<std::size_t>(i * batch_size_);
    const auto end = std::min(order_.size(), begin + static_cast<std::size_t>(batch_size_));
    MiniBatch out;
    out.index = i;
    out.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(end));
    out.features = source_->features(out.rows, Eigen::all);
    out.targets = source_->targets(out.rows);
    if (scaler_) {
        out.features = apply_features(*scaler_, out.features);
        out.targets = apply_targets(*scaler_, out.targets);
    }
    return out;
}

std::vector<MiniBatch> MiniBatchStream::collect(Index limit) const
{
    const Index count = limit < 0 ? n_batches_ : std::min(limit, n_batches_);
    std::vector<MiniBatch> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i)
        out.push_back(batch(i));
    return out;
}

MiniBatchStream minibatch_stream(const Dataset& source, std::vector<Index> train_rows, Index batch_size,
                                 std::uint64_t seed)
{
    return MiniBatchStream(source, std::move(train_rows), batch_size, seed);
}

Dataset subset(const Dataset& source, std::span<const Index> rows)
{
    std::vector<Index> idx(rows.begin(), rows.end());
    Dataset out;
    out.name = source.name;
    out.features = source.features(idx, Eigen::all);
    out.targets = source.targets(idx);
    out.feature_names = source.feature_names;
    out.target_name = source.target_name;
    out.provenance = source.provenance;
    return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) noexcept
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace olrbench
