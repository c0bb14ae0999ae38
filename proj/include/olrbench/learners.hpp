#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "olrbench/core.hpp"

namespace olrbench {

enum class Algorithm { sgd, mbgd, lms, orr, olr, rls, pa, olr_wa };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::sgd, Algorithm::mbgd, Algorithm::lms, Algorithm::orr,
                                               Algorithm::olr, Algorithm::rls,  Algorithm::pa,  Algorithm::olr_wa};

std::string_view to_string(Algorithm algorithm) noexcept;
/// Accepts the display names (SGD, MBGD, LMS, ORR, OLR, RLS, PA, OLR-WA), case-insensitive.
Algorithm parse_algorithm(std::string_view text);

/// Hyperparameters of one learner. Fields irrelevant to the algorithm are ignored.
///
/// eta      learning rate (SGD, MBGD, LMS, ORR, OLR)
/// lambda   penalty weight (ORR, OLR) or forgetting factor (RLS)
/// delta    RLS initialization, P0 = I / delta
/// C        PA aggressiveness
/// epsilon  PA insensitivity
/// epochs   passes over each mini-batch (SGD, ORR, OLR) or gradient steps per batch (MBGD)
/// w_base   OLR-WA weight of the accumulated model
/// w_inc    OLR-WA weight of the per-batch model
struct LearnerConfig {
    Algorithm algorithm = Algorithm::sgd;
    double eta = 0.01;
    double lambda = 0.1;
    double delta = 0.01;
    double C = 0.1;
    double epsilon = 0.1;
    int epochs = 1;
    double w_base = 0.5;
    double w_inc = 0.5;

    /// Benchmark defaults for the algorithm's base column of the hyperparameter table.
    static LearnerConfig defaults(Algorithm algorithm);

    /// Throws ValidationError when an invariant for the selected algorithm fails.
    void validate() const;
};

/// Ridge term added to every per-batch least-squares fit so that batches with
/// fewer rows than coefficients stay solvable.
inline constexpr double kOlrWaRidge = 1e-8;

template <typename Scalar>
struct LinearModel {
    Vector<Scalar> weights;
    Scalar intercept = Scalar(0);

    Index dims() const noexcept { return weights.size(); }

    /// [weights..., intercept]
    Vector<Scalar> augmented() const
    {
        Vector<Scalar> out(weights.size() + 1);
        out << weights, intercept;
        return out;
    }

    static LinearModel from_augmented(const Vector<Scalar>& theta)
    {
        return {theta.head(theta.size() - 1), theta(theta.size() - 1)};
    }

    bool all_finite() const { return weights.allFinite() && std::isfinite(intercept); }
};

template <typename Scalar>
struct LearnerState {
    Algorithm algorithm = Algorithm::sgd;
    LinearModel<Scalar> model;
    Matrix<Scalar> P;                             // RLS inverse correlation, (d+1) x (d+1)
    std::optional<LinearModel<Scalar>> base;      // OLR-WA accumulated model
    std::int64_t samples_seen = 0;
};

namespace detail {

template <typename Scalar>
Scalar sign(Scalar v)
{
    return static_cast<Scalar>((Scalar(0) < v) - (v < Scalar(0)));
}

template <typename Scalar>
void check_finite(const LearnerState<Scalar>& state, const LearnerConfig& config)
{
    if (!state.model.all_finite()) {
        std::ostringstream msg;
        msg << to_string(config.algorithm) << " diverged (eta=" << config.eta << ")";
        throw DivergenceError(msg.str());
    }
}

template <typename Scalar, typename DerivedX>
void check_width(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& X)
{
    if (X.cols() != model.dims())
        throw ValidationError(Stage::learner, "feature width " + std::to_string(X.cols()) +
                                                  " does not match model dimension " + std::to_string(model.dims()));
}

template <typename DerivedX, typename DerivedY>
void check_batch(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedY>& y)
{
    if (X.rows() != y.size())
        throw ValidationError(Stage::learner, "batch has " + std::to_string(X.rows()) + " rows but " +
                                                  std::to_string(y.size()) + " targets");
}

} // namespace detail

template <typename Scalar = double>
LearnerState<Scalar> init(const LearnerConfig& config, Index d)
{
    config.validate();
    if (d < 1)
        throw ValidationError(Stage::learner, "learner dimension must be >= 1");
    LearnerState<Scalar> state;
    state.algorithm = config.algorithm;
    state.model.weights = Vector<Scalar>::Zero(d);
    state.model.intercept = Scalar(0);
    if (config.algorithm == Algorithm::rls)
        state.P = Matrix<Scalar>::Identity(d + 1, d + 1) / static_cast<Scalar>(config.delta);
    return state;
}

template <typename Scalar, typename DerivedX>
Vector<Scalar> predict(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& X)
{
    detail::check_width(model, X);
    return (X.template cast<Scalar>() * model.weights).array() + model.intercept;
}

template <typename Scalar, typename DerivedX>
Vector<Scalar> predict(const LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X)
{
    return predict(state.model, X);
}

template <typename Scalar, typename DerivedX>
Scalar predict_one(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x)
{
    return model.weights.dot(x.template cast<Scalar>()) + model.intercept;
}

/// Gradient of 0.5 * (y_hat - y)^2 with respect to [weights, intercept].
template <typename Scalar, typename DerivedX>
Vector<Scalar> squared_loss_gradient(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x, Scalar y)
{
    const Scalar residual = predict_one(model, x) - y;
    Vector<Scalar> grad(model.dims() + 1);
    grad << residual * x.template cast<Scalar>(), residual;
    return grad;
}

/// Squared-loss gradient plus lambda * w, intercept unpenalized.
template <typename Scalar, typename DerivedX>
Vector<Scalar> ridge_gradient(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x, Scalar y,
                              Scalar lambda)
{
    Vector<Scalar> grad = squared_loss_gradient(model, x, y);
    grad.head(model.dims()) += lambda * model.weights;
    return grad;
}

/// Squared-loss gradient plus lambda * sign(w) with sign(0) = 0, intercept unpenalized.
template <typename Scalar, typename DerivedX>
Vector<Scalar> lasso_subgradient(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x, Scalar y,
                                 Scalar lambda)
{
    Vector<Scalar> grad = squared_loss_gradient(model, x, y);
    grad.head(model.dims()) += lambda * model.weights.unaryExpr([](Scalar w) { return detail::sign(w); });
    return grad;
}

/// Batch-mean squared-loss gradient.
template <typename Scalar, typename DerivedX, typename DerivedY>
Vector<Scalar> batch_gradient(const LinearModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& X,
                              const Eigen::MatrixBase<DerivedY>& y)
{
    const Vector<Scalar> residual = predict(model, X) - y.template cast<Scalar>();
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(X.rows());
    Vector<Scalar> grad(model.dims() + 1);
    grad << inv_b * (X.template cast<Scalar>().transpose() * residual), inv_b * residual.sum();
    return grad;
}

template <typename Scalar>
void apply_step(LinearModel<Scalar>& model, const Vector<Scalar>& direction, Scalar step)
{
    model.weights.noalias() -= step * direction.head(model.dims());
    model.intercept -= step * direction(model.dims());
}

template <typename Scalar, typename DerivedX, typename DerivedY>
void sgd_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eta = static_cast<Scalar>(config.eta);
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        for (Index i = 0; i < X.rows(); ++i)
            apply_step(state.model, squared_loss_gradient(state.model, X.row(i).transpose(), Scalar(y(i))), eta);
    detail::check_finite(state, config);
}

template <typename Scalar, typename DerivedX, typename DerivedY>
void mbgd_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                 const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eta = static_cast<Scalar>(config.eta);
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        apply_step(state.model, batch_gradient(state.model, X, y), eta);
    detail::check_finite(state, config);
}

/// Widrow-Hoff: one pass, no epochs, no penalty.
template <typename Scalar, typename DerivedX, typename DerivedY>
void lms_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eta = static_cast<Scalar>(config.eta);
    for (Index i = 0; i < X.rows(); ++i) {
        const auto x = X.row(i).transpose().template cast<Scalar>();
        const Scalar err = Scalar(y(i)) - predict_one(state.model, x);
        state.model.weights.noalias() += eta * err * x;
        state.model.intercept += eta * err;
    }
    detail::check_finite(state, config);
}

template <typename Scalar, typename DerivedX, typename DerivedY>
void orr_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eta = static_cast<Scalar>(config.eta);
    const auto lambda = static_cast<Scalar>(config.lambda);
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        for (Index i = 0; i < X.rows(); ++i)
            apply_step(state.model, ridge_gradient(state.model, X.row(i).transpose(), Scalar(y(i)), lambda), eta);
    detail::check_finite(state, config);
}

template <typename Scalar, typename DerivedX, typename DerivedY>
void olr_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eta = static_cast<Scalar>(config.eta);
    const auto lambda = static_cast<Scalar>(config.lambda);
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        for (Index i = 0; i < X.rows(); ++i)
            apply_step(state.model, lasso_subgradient(state.model, X.row(i).transpose(), Scalar(y(i)), lambda), eta);
    detail::check_finite(state, config);
}

/// Exponentially weighted RLS on the intercept-augmented features. P is
/// re-symmetrized after every point.
template <typename Scalar, typename DerivedX, typename DerivedY>
void rls_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const Index d = state.model.dims();
    if (state.P.rows() != d + 1 || state.P.cols() != d + 1)
        throw StateError(Stage::learner, "RLS state has no inverse-correlation matrix; call init first");
    const auto lambda = static_cast<Scalar>(config.lambda);
    Vector<Scalar> xa(d + 1);
    Vector<Scalar> Px(d + 1);
    for (Index i = 0; i < X.rows(); ++i) {
        xa << X.row(i).transpose().template cast<Scalar>(), Scalar(1);
        Px.noalias() = state.P.template selfadjointView<Eigen::Lower>() * xa;
        const Scalar denom = lambda + xa.dot(Px);
        const Vector<Scalar> gain = Px / denom;
        const Scalar err = Scalar(y(i)) - predict_one(state.model, xa.head(d));
        state.model.weights.noalias() += err * gain.head(d);
        state.model.intercept += err * gain(d);
        // P symmetric => x^T P = (P x)^T
        state.P.noalias() -= gain * Px.transpose();
        state.P /= lambda;
        state.P = Scalar(0.5) * (state.P + state.P.transpose()).eval();
    }
    if (!state.P.allFinite())
        throw ConditioningError("RLS inverse-correlation matrix became non-finite (lambda=" +
                                std::to_string(config.lambda) + ", delta=" + std::to_string(config.delta) + ")");
    detail::check_finite(state, config);
}

/// Epsilon-insensitive passive-aggressive regression with the squared-slack
/// step size tau = loss / (|x|^2 + 1 / (2C)).
template <typename Scalar, typename DerivedX, typename DerivedY>
void pa_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
               const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_batch(X, y);
    detail::check_width(state.model, X);
    const auto eps = static_cast<Scalar>(config.epsilon);
    const auto slack = Scalar(1) / (Scalar(2) * static_cast<Scalar>(config.C));
    for (Index i = 0; i < X.rows(); ++i) {
        const auto x = X.row(i).transpose().template cast<Scalar>();
        const Scalar err = Scalar(y(i)) - predict_one(state.model, x);
        const Scalar loss = std::abs(err) - eps;
        if (!(loss > Scalar(0)))
            continue;
        const Scalar norm2 = x.squaredNorm() + Scalar(1);
        const Scalar step = detail::sign(err) * loss / (norm2 + slack);
        state.model.weights.noalias() += step * x;
        state.model.intercept += step;
    }
    detail::check_finite(state, config);
}

/// Ridge-stabilized least-squares fit of one batch.
template <typename Scalar, typename DerivedX, typename DerivedY>
LinearModel<Scalar> least_squares_fit(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedY>& y,
                                      Scalar ridge = static_cast<Scalar>(kOlrWaRidge))
{
    detail::check_batch(X, y);
    const Index n = X.rows();
    const Index d = X.cols();
    Matrix<Scalar> Xa(n, d + 1);
    Xa << X.template cast<Scalar>(), Vector<Scalar>::Ones(n);
    Matrix<Scalar> gram = Matrix<Scalar>::Identity(d + 1, d + 1) * ridge;
    gram.template selfadjointView<Eigen::Lower>().rankUpdate(Xa.transpose());
    const Vector<Scalar> rhs = Xa.transpose() * y.template cast<Scalar>();
    const Vector<Scalar> theta = gram.template selfadjointView<Eigen::Lower>().ldlt().solve(rhs);
    if (!theta.allFinite())
        throw ConditioningError("least-squares batch fit produced non-finite coefficients");
    return LinearModel<Scalar>::from_augmented(theta);
}

/// Coefficient-wise weighted average (w_base * base + w_inc * inc) / (w_base + w_inc).
template <typename Scalar>
LinearModel<Scalar> combine_weighted(const LinearModel<Scalar>& base, const LinearModel<Scalar>& incremental,
                                     double w_base, double w_inc)
{
    const auto wb = static_cast<Scalar>(w_base);
    const auto wi = static_cast<Scalar>(w_inc);
    const Scalar total = wb + wi;
    return {(wb * base.weights + wi * incremental.weights) / total,
            (wb * base.intercept + wi * incremental.intercept) / total};
}

template <typename Scalar, typename DerivedX, typename DerivedY>
void olr_wa_update(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                   const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    detail::check_width(state.model, X);
    if (X.rows() < 1)
        throw ValidationError(Stage::learner, "OLR-WA needs at least one point per batch");
    const LinearModel<Scalar> incremental = least_squares_fit<Scalar>(X, y);
    state.base = state.base ? combine_weighted(*state.base, incremental, config.w_base, config.w_inc) : incremental;
    state.model = *state.base;
    detail::check_finite(state, config);
}

/// Dispatches on config.algorithm and advances the sample counter.
template <typename Scalar, typename DerivedX, typename DerivedY>
void partial_fit(LearnerState<Scalar>& state, const Eigen::MatrixBase<DerivedX>& X,
                 const Eigen::MatrixBase<DerivedY>& y, const LearnerConfig& config)
{
    if (state.algorithm != config.algorithm)
        throw ValidationError(Stage::learner, "state was initialized for " + std::string(to_string(state.algorithm)) +
                                                  " but config selects " + std::string(to_string(config.algorithm)));
    switch (config.algorithm) {
    case Algorithm::sgd: sgd_update(state, X, y, config); break;
    case Algorithm::mbgd: mbgd_update(state, X, y, config); break;
    case Algorithm::lms: lms_update(state, X, y, config); break;
    case Algorithm::orr: orr_update(state, X, y, config); break;
    case Algorithm::olr: olr_update(state, X, y, config); break;
    case Algorithm::rls: rls_update(state, X, y, config); break;
    case Algorithm::pa: pa_update(state, X, y, config); break;
    case Algorithm::olr_wa: olr_wa_update(state, X, y, config); break;
    default: throw ValidationError(Stage::learner, "unknown algorithm id");
    }
    state.samples_seen += static_cast<std::int64_t>(X.rows());
}

/// Flat snapshot record: "ALGO,d,w1,...,wd,intercept".
template <typename Scalar>
std::string snapshot_record(const LearnerState<Scalar>& state)
{
    std::ostringstream out;
    out.precision(17);
    out << to_string(state.algorithm) << ',' << state.model.dims();
    for (Index j = 0; j < state.model.dims(); ++j)
        out << ',' << state.model.weights(j);
    out << ',' << state.model.intercept;
    return out.str();
}

} // namespace olrbench
