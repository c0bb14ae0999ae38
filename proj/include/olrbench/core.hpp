#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace olrbench {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Pipeline stage that raised an error. Used to tag CLI messages.
enum class Stage { config, data, learner, evaluation, stats, report };

std::string_view to_string(Stage stage) noexcept;

/// Base of every error thrown by the library. Carries the originating stage.
class Error : public std::runtime_error {
public:
    Error(Stage stage, const std::string& what)
        : std::runtime_error(what), stage_(stage) {}

    Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

/// Bad user input: invalid spec, config, or argument. Maps to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input file, with row/column location in the message.
class IngestionError : public ValidationError {
public:
    IngestionError(const std::string& what) : ValidationError(Stage::data, what) {}
};

/// Operation invoked on an object in the wrong state (e.g. unfitted scaler).
class StateError : public Error {
public:
    using Error::Error;
};

/// A learner produced non-finite coefficients.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what) : Error(Stage::learner, what) {}
};

/// A linear solve or covariance update went non-finite.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what) : Error(Stage::learner, what) {}
};

/// Iman-Davenport denominator vanished (identical rankings on every dataset).
class DegenerateStatisticError : public Error {
public:
    DegenerateStatisticError(const std::string& what) : Error(Stage::stats, what) {}
};

/// Request outside an embedded lookup table.
class RangeError : public ValidationError {
public:
    RangeError(const std::string& what) : ValidationError(Stage::stats, what) {}
};

/// Archive whose stored statistics disagree with its own score matrix.
class IntegrityError : public Error {
public:
    IntegrityError(const std::string& what) : Error(Stage::report, what) {}
};

inline constexpr std::string_view kToolVersion = "0.3.0";

} // namespace olrbench
