#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "olrbench/core.hpp"

namespace olrbench {

/// Parameters of a noisy linear dataset. Features are uniform on [-1, 1],
/// coefficients and intercept uniform on [coef_min, coef_max], and the
/// targets carry additive Gaussian noise with std-dev noise_sigma.
struct SyntheticSpec {
    Index n_points = 1000;
    Index n_dims = 3;
    double noise_sigma = 10.0;
    double coef_min = -10.0;
    double coef_max = 10.0;
    std::uint64_t seed = 0;

    /// Throws ValidationError. n_folds bounds the minimum row count.
    void validate(Index n_folds = 5) const;
};

/// Shapes of the four synthetic benchmark datasets ("ds1" .. "ds4").
SyntheticSpec synthetic_preset(std::string_view name);

/// The hyperplane a synthetic dataset was drawn from.
struct SyntheticOrigin {
    SyntheticSpec spec;
    VectorXd coefficients;
    double intercept = 0.0;
};

struct FileOrigin {
    std::string path;
};

struct Dataset {
    std::string name;
    MatrixXd features;  // n x d
    VectorXd targets;   // n
    std::vector<std::string> feature_names;
    std::string target_name = "target";
    std::variant<SyntheticOrigin, FileOrigin> provenance;

    Index rows() const noexcept { return features.rows(); }
    Index dims() const noexcept { return features.cols(); }

    /// Row count agreement and finiteness.
    void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec, std::string name = "synthetic");

struct CsvSchema {
    /// Column holding the target; empty selects the last column.
    std::string target;
};

/// Reads a header-row CSV. Every non-target column becomes a feature.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
Dataset parse_csv(std::istream& in, const std::string& source, const CsvSchema& schema = {});

/// Writes features followed by the target column, with a header row.
void write_csv(const Dataset& dataset, std::ostream& out);

enum class ScalePolicy { none, zscore };

std::string_view to_string(ScalePolicy policy) noexcept;
ScalePolicy parse_scale_policy(std::string_view text);

/// Per-column location/scale for features and target. A default-constructed
/// object is unfitted and every apply/invert call on it throws StateError.
struct ScalerParams {
    ScalePolicy policy = ScalePolicy::none;
    VectorXd feature_location;
    VectorXd feature_scale;
    double target_location = 0.0;
    double target_scale = 1.0;
    bool fitted = false;
};

ScalerParams fit_scaler(const MatrixXd& features, const VectorXd& targets, ScalePolicy policy);
/// Fits on the given rows of a dataset only.
ScalerParams fit_scaler(const Dataset& dataset, std::span<const Index> rows, ScalePolicy policy);

MatrixXd apply_features(const ScalerParams& params, const MatrixXd& features);
VectorXd apply_targets(const ScalerParams& params, const VectorXd& targets);
MatrixXd invert_features(const ScalerParams& params, const MatrixXd& features);
VectorXd invert_targets(const ScalerParams& params, const VectorXd& targets);

struct FoldPlan {
    Index k = 5;
    std::vector<Index> assignments;  // fold index per row
    std::uint64_t seed = 0;

    std::vector<Index> test_rows(Index fold) const;
    std::vector<Index> train_rows(Index fold) const;
};

/// Seeded shuffle followed by a contiguous partition into k folds whose
/// sizes differ by at most one.
FoldPlan kfold_split(Index n_rows, Index k, std::uint64_t seed);
inline FoldPlan kfold_split(const Dataset& dataset, Index k, std::uint64_t seed)
{
    return kfold_split(dataset.rows(), k, seed);
}

struct MiniBatch {
    MatrixXd features;
    VectorXd targets;
    Index index = 0;
    std::vector<Index> rows;  // source row of each batch entry
};

/// Seeded shuffle of the training rows cut into consecutive slices. Batches
/// are gathered from the source dataset on demand, so the stream holds only
/// an index permutation. The source dataset must outlive the stream.
class MiniBatchStream {
public:
    MiniBatchStream(const Dataset& source, std::vector<Index> train_rows, Index batch_size,
                    std::uint64_t seed, std::optional<ScalerParams> scaler = std::nullopt);

    Index size() const noexcept { return n_batches_; }
    Index batch_size() const noexcept { return batch_size_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<Index>& order() const noexcept { return order_; }

    MiniBatch batch(Index i) const;
    /// First `limit` batches (all when limit < 0).
    std::vector<MiniBatch> collect(Index limit = -1) const;

private:
    const Dataset* source_;
    std::vector<Index> order_;
    Index batch_size_;
    Index n_batches_;
    std::uint64_t seed_;
    std::optional<ScalerParams> scaler_;
};

MiniBatchStream minibatch_stream(const Dataset& source, std::vector<Index> train_rows,
                                 Index batch_size, std::uint64_t seed);

/// Gathers rows into a standalone dataset.
Dataset subset(const Dataset& source, std::span<const Index> rows);

/// splitmix64 mix of a base seed with a salt; used to derive per-fold streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) noexcept;

} // namespace olrbench
