#include <doctest.h>

#include <functional>

#include "olrbench/learners.hpp"
#include "test_util.hpp"

using namespace olrbench;

namespace {

using Objective = std::function<double(const VectorXd& theta)>;

// Central differences over the augmented coefficient vector [w, b].
VectorXd numeric_gradient(const Objective& f, const VectorXd& theta, double h = 1e-6)
{
    VectorXd g(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        VectorXd up = theta, down = theta;
        up(i) += h;
        down(i) -= h;
        g(i) = (f(up) - f(down)) / (2.0 * h);
    }
    return g;
}

double half_squared_error(const VectorXd& theta, const VectorXd& x, double y)
{
    const double r = theta.head(x.size()).dot(x) + theta(x.size()) - y;
    return 0.5 * r * r;
}

double relative_error(const VectorXd& a, const VectorXd& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

LearnerState<double> state_with(Algorithm a, const VectorXd& w, double b, const LearnerConfig& c)
{
    auto s = init<double>(c, w.size());
    s.algorithm = a;
    s.model.weights = w;
    s.model.intercept = b;
    return s;
}

LearnerConfig cfg(Algorithm a)
{
    return LearnerConfig::defaults(a);
}

MatrixXd row(std::initializer_list<double> values)
{
    MatrixXd m(1, static_cast<Index>(values.size()));
    Index j = 0;
    for (double v : values)
        m(0, j++) = v;
    return m;
}

VectorXd vec(std::initializer_list<double> values)
{
    VectorXd v(static_cast<Index>(values.size()));
    Index j = 0;
    for (double x : values)
        v(j++) = x;
    return v;
}

} // namespace

TEST_SUITE("learners") {

TEST_CASE("init zeroes the model")
{
    const auto s = init<double>(cfg(Algorithm::sgd), 3);
    CHECK(s.model.weights == VectorXd::Zero(3));
    CHECK(s.model.intercept == 0.0);
    CHECK(s.samples_seen == 0);
    MatrixXd X = MatrixXd::Random(4, 3);
    CHECK(predict(s, X) == VectorXd::Zero(4));
}

TEST_CASE("init RLS scales the identity by 1/delta")
{
    auto c = cfg(Algorithm::rls);
    c.delta = 0.01;
    const auto s = init<double>(c, 2);
    CHECK((s.P - 100.0 * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init rejects invalid configs")
{
    auto rls = cfg(Algorithm::rls);
    rls.lambda = 1.5;
    CHECK_THROWS_AS(init<double>(rls, 2), ValidationError);
    auto pa = cfg(Algorithm::pa);
    pa.C = 0.0;
    CHECK_THROWS_AS(init<double>(pa, 2), ValidationError);
    auto wa = cfg(Algorithm::olr_wa);
    wa.w_base = 0.0, wa.w_inc = 0.0;
    CHECK_THROWS_AS(init<double>(wa, 2), ValidationError);
    auto sgd = cfg(Algorithm::sgd);
    sgd.eta = -1.0;
    CHECK_THROWS_AS(init<double>(sgd, 2), ValidationError);
    CHECK_THROWS_AS(init<double>(cfg(Algorithm::sgd), 0), ValidationError);
    CHECK_THROWS_AS(parse_algorithm("ADAM"), ValidationError);
    CHECK(parse_algorithm("olr-wa") == Algorithm::olr_wa);
    CHECK(parse_algorithm("OLR_WA") == Algorithm::olr_wa);
}

TEST_CASE("predict")
{
    LinearModel<double> m{vec({2.0}), 1.0};
    CHECK(predict(m, row({3.0}))(0) == 7.0);
    LinearModel<double> zero{VectorXd::Zero(2), -4.5};
    CHECK(predict(zero, row({9.0, 1.0}))(0) == -4.5);
    LinearModel<double> sym{vec({1.0, -1.0}), 0.0};
    CHECK(predict(sym, row({0.5, 0.5}))(0) == 0.0);
    CHECK_THROWS_AS(predict(sym, row({1.0})), ValidationError);
}

TEST_CASE("SGD single step")
{
    auto c = cfg(Algorithm::sgd);
    c.eta = 0.1, c.epochs = 1;
    auto s = init<double>(c, 1);
    sgd_update(s, row({1.0}), vec({1.0}), c);
    CHECK(s.model.weights(0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.model.intercept == doctest::Approx(0.1).epsilon(1e-15));

    // analytic step agrees with a finite-difference step
    const VectorXd theta0 = VectorXd::Zero(2);
    const VectorXd x = vec({1.0});
    const VectorXd g = numeric_gradient([&](const VectorXd& t) { return half_squared_error(t, x, 1.0); }, theta0);
    CHECK(relative_error(theta0 - 0.1 * g, s.model.augmented()) < 1e-8);
}

TEST_CASE("SGD no-op cases")
{
    auto c = cfg(Algorithm::sgd);
    auto s = state_with(Algorithm::sgd, vec({2.0, -1.0}), 0.5, c);
    // point exactly on the hyperplane: 2*1 - 1*3 + 0.5 = -0.5
    sgd_update(s, row({1.0, 3.0}), vec({-0.5}), c);
    CHECK(s.model.weights == vec({2.0, -1.0}));
    CHECK(s.model.intercept == 0.5);

    c.eta = 0.0;
    sgd_update(s, row({4.0, 1.0}), vec({100.0}), c);
    CHECK(s.model.weights == vec({2.0, -1.0}));
    CHECK(s.model.intercept == 0.5);
}

TEST_CASE("SGD step scales linearly with eta")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const VectorXd w = test::random_vector(rng, 4, -3, 3);
        const MatrixXd X = test::random_matrix(rng, 1, 4);
        const VectorXd y = test::random_vector(rng, 1, -5, 5);
        auto c = cfg(Algorithm::sgd);
        c.epochs = 1, c.eta = 0.0625;
        auto a = state_with(Algorithm::sgd, w, 0.25, c);
        sgd_update(a, X, y, c);
        c.eta = 0.125;
        auto b = state_with(Algorithm::sgd, w, 0.25, c);
        sgd_update(b, X, y, c);
        CHECK(test::max_abs((b.model.weights - w) - 2.0 * (a.model.weights - w)) < 1e-14);
        CHECK(std::abs((b.model.intercept - 0.25) - 2.0 * (a.model.intercept - 0.25)) < 1e-14);
    }
}

TEST_CASE("gradients match central finite differences")
{
    std::mt19937_64 rng(77);
    const double lambda = 0.3;
    for (int trial = 0; trial < 100; ++trial) {
        const Index d = 1 + Index(rng() % 6);
        LinearModel<double> m{test::random_vector(rng, d, -2, 2), test::random_vector(rng, 1, -2, 2)(0)};
        const VectorXd x = test::random_vector(rng, d, -3, 3);
        const double y = test::random_vector(rng, 1, -5, 5)(0);
        const VectorXd theta = m.augmented();

        const auto sq = [&](const VectorXd& t) { return half_squared_error(t, x, y); };
        CHECK(relative_error(squared_loss_gradient(m, x, y), numeric_gradient(sq, theta)) < 1e-5);

        const auto ridge = [&](const VectorXd& t) { return sq(t) + 0.5 * lambda * t.head(d).squaredNorm(); };
        CHECK(relative_error(ridge_gradient(m, x, y, lambda), numeric_gradient(ridge, theta)) < 1e-5);

        // keep lasso off the kink
        for (Index j = 0; j < d; ++j)
            if (std::abs(m.weights(j)) < 1e-3)
                m.weights(j) = 0.5;
        const VectorXd theta_l = m.augmented();
        const auto lasso = [&](const VectorXd& t) { return sq(t) + lambda * t.head(d).lpNorm<1>(); };
        CHECK(relative_error(lasso_subgradient(m, x, y, lambda), numeric_gradient(lasso, theta_l)) < 1e-4);
    }
}

TEST_CASE("MBGD")
{
    std::mt19937_64 rng(3);
    SUBCASE("batch of one equals one SGD step")
    {
        const MatrixXd X = test::random_matrix(rng, 1, 3);
        const VectorXd y = test::random_vector(rng, 1);
        auto c = cfg(Algorithm::mbgd);
        c.epochs = 1;
        auto a = state_with(Algorithm::mbgd, vec({0.1, 0.2, 0.3}), 0.4, c);
        auto sc = cfg(Algorithm::sgd);
        sc.eta = c.eta, sc.epochs = 1;
        auto b = state_with(Algorithm::sgd, vec({0.1, 0.2, 0.3}), 0.4, sc);
        mbgd_update(a, X, y, c);
        sgd_update(b, X, y, sc);
        CHECK(test::max_abs(a.model.augmented() - b.model.augmented()) < 1e-15);
    }
    SUBCASE("opposite residual-weighted points cancel")
    {
        // model 0: residuals -1 at x = 1 and +1 at x = -1 -> feature terms cancel;
        // targets chosen with opposite sign so the intercept terms cancel as well
        MatrixXd X(2, 1);
        X << 1.0, -1.0;
        const VectorXd y = vec({1.0, -1.0});
        auto c = cfg(Algorithm::mbgd);
        auto s = state_with(Algorithm::mbgd, vec({1.0}), 0.0, c);
        mbgd_update(s, X, y, c);
        CHECK(s.model.weights(0) == 1.0);
        CHECK(s.model.intercept == 0.0);
    }
    SUBCASE("batch gradient is the mean of per-point gradients")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const MatrixXd X = test::random_matrix(rng, 17, 4, -2, 2);
            const VectorXd y = test::random_vector(rng, 17, -3, 3);
            LinearModel<double> m{test::random_vector(rng, 4), 0.7};
            VectorXd mean = VectorXd::Zero(5);
            for (Index i = 0; i < X.rows(); ++i)
                mean += squared_loss_gradient(m, X.row(i).transpose(), y(i));
            mean /= double(X.rows());
            CHECK(test::max_abs(batch_gradient(m, X, y) - mean) < 1e-12);
        }
    }
}

TEST_CASE("LMS")
{
    auto c = cfg(Algorithm::lms);
    SUBCASE("zero residual")
    {
        auto s = state_with(Algorithm::lms, vec({1.0}), 1.0, c);
        lms_update(s, row({2.0}), vec({3.0}), c);
        CHECK(s.model.weights(0) == 1.0);
        CHECK(s.model.intercept == 1.0);
    }
    SUBCASE("same step as single-epoch SGD")
    {
        std::mt19937_64 rng(9);
        const MatrixXd X = test::random_matrix(rng, 12, 3);
        const VectorXd y = test::random_vector(rng, 12, -4, 4);
        auto sc = cfg(Algorithm::sgd);
        sc.eta = c.eta, sc.epochs = 1;
        auto a = init<double>(c, 3);
        auto b = init<double>(sc, 3);
        lms_update(a, X, y, c);
        sgd_update(b, X, y, sc);
        CHECK(test::max_abs(a.model.augmented() - b.model.augmented()) < 1e-14);
    }
    SUBCASE("error trends down on a stationary stream")
    {
        std::mt19937_64 rng(10);
        const VectorXd w_true = vec({1.5, -2.0, 0.5});
        const MatrixXd test_x = test::random_matrix(rng, 200, 3);
        const VectorXd test_y = (test_x * w_true).array() + 0.3;
        c.eta = 0.05;
        auto s = init<double>(c, 3);
        std::vector<double> trace;
        for (int b = 0; b < 10; ++b) {
            const MatrixXd X = test::random_matrix(rng, 20, 3);
            const VectorXd y = ((X * w_true).array() + 0.3).matrix() + 0.05 * test::random_vector(rng, 20);
            lms_update(s, X, y, c);
            trace.push_back((predict(s, test_x) - test_y).squaredNorm() / 200.0);
        }
        // least-squares slope of the trace against the batch index
        double sx = 0, sy = 0, sxy = 0, sxx = 0;
        for (int i = 0; i < 10; ++i)
            sx += i, sy += trace[i], sxy += i * trace[i], sxx += i * i;
        const double slope = (10 * sxy - sx * sy) / (10 * sxx - sx * sx);
        CHECK(slope < 0.0);
        CHECK(trace.back() < trace.front());
    }
}

TEST_CASE("ORR")
{
    std::mt19937_64 rng(21);
    SUBCASE("lambda = 0 reproduces SGD")
    {
        auto c = cfg(Algorithm::orr);
        c.lambda = 0.0;
        auto sc = cfg(Algorithm::sgd);
        sc.eta = c.eta, sc.epochs = c.epochs;
        auto a = init<double>(c, 4);
        auto b = init<double>(sc, 4);
        for (int t = 0; t < 5; ++t) {
            const MatrixXd X = test::random_matrix(rng, 8, 4);
            const VectorXd y = test::random_vector(rng, 8, -3, 3);
            orr_update(a, X, y, c);
            sgd_update(b, X, y, sc);
        }
        CHECK(a.model.augmented() == b.model.augmented());
    }
    SUBCASE("pure penalty step shrinks weights and keeps the intercept")
    {
        auto c = cfg(Algorithm::orr);
        c.epochs = 1;
        auto s = state_with(Algorithm::orr, vec({2.0, -4.0}), 1.0, c);
        // zero residual: 2*1 - 4*0.5 + 1 = 1
        orr_update(s, row({1.0, 0.5}), vec({1.0}), c);
        CHECK(s.model.weights(0) == doctest::Approx(2.0 * (1.0 - c.eta * c.lambda)));
        CHECK(s.model.weights(1) == doctest::Approx(-4.0 * (1.0 - c.eta * c.lambda)));
        CHECK(s.model.intercept == 1.0);
    }
}

TEST_CASE("OLR")
{
    std::mt19937_64 rng(22);
    SUBCASE("lambda = 0 reproduces SGD")
    {
        auto c = cfg(Algorithm::olr);
        c.lambda = 0.0;
        auto sc = cfg(Algorithm::sgd);
        sc.eta = c.eta, sc.epochs = c.epochs;
        auto a = init<double>(c, 3);
        auto b = init<double>(sc, 3);
        const MatrixXd X = test::random_matrix(rng, 8, 3);
        const VectorXd y = test::random_vector(rng, 8, -3, 3);
        olr_update(a, X, y, c);
        sgd_update(b, X, y, sc);
        CHECK(a.model.augmented() == b.model.augmented());
    }
    SUBCASE("origin with zero residual is a fixed point")
    {
        auto c = cfg(Algorithm::olr);
        auto s = init<double>(c, 2);
        olr_update(s, row({0.3, -0.7}), vec({0.0}), c);
        CHECK(s.model.weights == VectorXd::Zero(2));
        CHECK(s.model.intercept == 0.0);
    }
}

TEST_CASE("RLS with lambda = 1 matches the delta-regularized normal equations")
{
    std::mt19937_64 rng(31);
    const Index n = 50, d = 3;
    const MatrixXd X = test::random_matrix(rng, n, d, -2, 2);
    const VectorXd y = (X * vec({3.0, -1.0, 2.0})).array() + 0.5 + (0.2 * test::random_vector(rng, n)).array();
    auto c = cfg(Algorithm::rls);
    c.lambda = 1.0, c.delta = 0.01;
    auto s = init<double>(c, d);
    rls_update(s, X, y, c);

    MatrixXd A(n, d + 1);
    A << X, VectorXd::Ones(n);
    const VectorXd oracle =
        (A.transpose() * A + c.delta * MatrixXd::Identity(d + 1, d + 1)).llt().solve(A.transpose() * y);
    CHECK(test::max_abs(s.model.augmented() - oracle) < 1e-6);
}

TEST_CASE("RLS zero innovation leaves the weights alone")
{
    auto c = cfg(Algorithm::rls);
    auto s = state_with(Algorithm::rls, vec({1.0, 2.0}), 0.75, c);
    s.P = MatrixXd::Identity(3, 3) / c.delta;
    rls_update(s, row({0.0, 0.0}), vec({0.75}), c);
    CHECK(s.model.weights == vec({1.0, 2.0}));
    CHECK(s.model.intercept == 0.75);
}

TEST_CASE("RLS keeps P symmetric over 1000 updates")
{
    std::mt19937_64 rng(32);
    auto c = cfg(Algorithm::rls);
    auto s = init<double>(c, 4);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const MatrixXd X = test::random_matrix(rng, 1, 4);
        rls_update(s, X, test::random_vector(rng, 1), c);
        worst = std::max(worst, test::max_abs(s.P - s.P.transpose()) / test::max_abs(s.P));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("PA")
{
    std::mt19937_64 rng(41);
    SUBCASE("points inside the tube never move the model")
    {
        auto c = cfg(Algorithm::pa);
        for (int trial = 0; trial < 100; ++trial) {
            const VectorXd w = test::random_vector(rng, 3, -2, 2);
            auto s = state_with(Algorithm::pa, w, 0.3, c);
            const MatrixXd X = test::random_matrix(rng, 1, 3);
            const double offset = test::random_vector(rng, 1, -1, 1)(0) * c.epsilon;
            const VectorXd y = predict(s, X).array() + offset;
            pa_update(s, X, y, c);
            CHECK(s.model.weights == w);
            CHECK(s.model.intercept == 0.3);
        }
    }
    SUBCASE("C -> infinity lands on the tube boundary")
    {
        auto c = cfg(Algorithm::pa);
        c.C = 1e12;
        for (int trial = 0; trial < 50; ++trial) {
            auto s = state_with(Algorithm::pa, test::random_vector(rng, 3), 0.0, c);
            const MatrixXd X = test::random_matrix(rng, 1, 3);
            const VectorXd y = test::random_vector(rng, 1, -10, 10);
            pa_update(s, X, y, c);
            const double loss = std::max(0.0, std::abs(predict(s, X)(0) - y(0)) - c.epsilon);
            CHECK(loss < 1e-9);
        }
    }
    SUBCASE("a step never overshoots")
    {
        for (int trial = 0; trial < 200; ++trial) {
            auto c = cfg(Algorithm::pa);
            c.C = std::pow(10.0, test::random_vector(rng, 1, -3, 3)(0));
            c.epsilon = test::random_vector(rng, 1, 0, 1)(0);
            auto s = state_with(Algorithm::pa, test::random_vector(rng, 4, -2, 2), 0.1, c);
            const MatrixXd X = test::random_matrix(rng, 1, 4, -3, 3);
            const VectorXd y = test::random_vector(rng, 1, -10, 10);
            const double before = std::abs(predict(s, X)(0) - y(0));
            pa_update(s, X, y, c);
            CHECK(std::abs(predict(s, X)(0) - y(0)) <= before + 1e-12);
        }
    }
}

TEST_CASE("OLR-WA")
{
    std::mt19937_64 rng(51);
    SUBCASE("equal weights take the midpoint")
    {
        LinearModel<double> base{vec({2.0}), 1.0};
        LinearModel<double> inc{vec({4.0}), 3.0};
        const auto m = combine_weighted(base, inc, 0.5, 0.5);
        CHECK(m.weights(0) == 3.0);
        CHECK(m.intercept == 2.0);
    }
    SUBCASE("first batch is the batch least-squares fit")
    {
        auto c = cfg(Algorithm::olr_wa);
        auto s = init<double>(c, 2);
        const MatrixXd X = test::random_matrix(rng, 10, 2);
        const VectorXd y = (X * vec({1.0, -3.0})).array() + 2.0;
        olr_wa_update(s, X, y, c);
        CHECK(test::max_abs(s.model.augmented() - vec({1.0, -3.0, 2.0})) < 1e-6);
        REQUIRE(s.base.has_value());
        CHECK(s.base->augmented() == s.model.augmented());
    }
    SUBCASE("w_inc = 0 freezes the base model")
    {
        auto c = cfg(Algorithm::olr_wa);
        c.w_base = 1.0, c.w_inc = 0.0;
        auto s = init<double>(c, 2);
        olr_wa_update(s, test::random_matrix(rng, 6, 2), test::random_vector(rng, 6), c);
        const VectorXd frozen = s.model.augmented();
        for (int b = 0; b < 3; ++b)
            olr_wa_update(s, test::random_matrix(rng, 6, 2), test::random_vector(rng, 6, -9, 9), c);
        CHECK(s.model.augmented() == frozen);
    }
    SUBCASE("single-point batches stay solvable")
    {
        auto c = cfg(Algorithm::olr_wa);
        auto s = init<double>(c, 5);
        olr_wa_update(s, test::random_matrix(rng, 1, 5), test::random_vector(rng, 1), c);
        CHECK(s.model.all_finite());
    }
    SUBCASE("combined coefficients lie between base and incremental")
    {
        for (int trial = 0; trial < 200; ++trial) {
            LinearModel<double> base{test::random_vector(rng, 3, -5, 5), test::random_vector(rng, 1, -5, 5)(0)};
            LinearModel<double> inc{test::random_vector(rng, 3, -5, 5), test::random_vector(rng, 1, -5, 5)(0)};
            const double wb = test::random_vector(rng, 1, 0, 1)(0);
            const double wi = test::random_vector(rng, 1, 0, 1)(0) + 1e-3;
            const VectorXd m = combine_weighted(base, inc, wb, wi).augmented();
            const VectorXd lo = base.augmented().cwiseMin(inc.augmented());
            const VectorXd hi = base.augmented().cwiseMax(inc.augmented());
            CHECK(((m - lo).array() >= -1e-12).all());
            CHECK(((hi - m).array() >= -1e-12).all());
        }
    }
}

TEST_CASE("partial_fit dispatch")
{
    std::mt19937_64 rng(61);
    const MatrixXd X = test::random_matrix(rng, 10, 3);
    const VectorXd y = test::random_vector(rng, 10);
    for (Algorithm a : kAllAlgorithms) {
        CAPTURE(to_string(a));
        const auto c = cfg(a);
        auto s1 = init<double>(c, 3);
        auto s2 = init<double>(c, 3);
        partial_fit(s1, X, y, c);
        partial_fit(s2, X, y, c);
        CHECK(s1.model.augmented() == s2.model.augmented());
        partial_fit(s1, X, y, c);
        CHECK(s1.samples_seen == 20);
    }
    const auto c = cfg(Algorithm::sgd);
    auto direct = init<double>(c, 3);
    auto dispatched = init<double>(c, 3);
    sgd_update(direct, X, y, c);
    partial_fit(dispatched, X, y, c);
    CHECK(direct.model.augmented() == dispatched.model.augmented());

    auto wrong = init<double>(cfg(Algorithm::lms), 3);
    CHECK_THROWS_AS(partial_fit(wrong, X, y, c), ValidationError);
}

TEST_CASE("divergence raises an error naming eta")
{
    auto c = cfg(Algorithm::sgd);
    c.eta = 1e3;
    auto s = init<double>(c, 2);
    MatrixXd X = MatrixXd::Constant(50, 2, 10.0);
    VectorXd y = VectorXd::Constant(50, 1e3);
    try {
        for (int i = 0; i < 50; ++i)
            sgd_update(s, X, y, c);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("eta") != std::string::npos);
    }
}

TEST_CASE("single-precision instantiation")
{
    auto c = cfg(Algorithm::rls);
    auto s = init<float>(c, 2);
    Eigen::MatrixXf X(3, 2);
    X << 1, 2, 3, 4, 5, 6;
    Eigen::VectorXf y(3);
    y << 1, 2, 3;
    partial_fit(s, X, y, c);
    CHECK(s.model.all_finite());
    auto wa = init<float>(cfg(Algorithm::olr_wa), 2);
    partial_fit(wa, X, y, cfg(Algorithm::olr_wa));
    CHECK(wa.model.all_finite());
}

TEST_CASE("snapshot record")
{
    auto c = cfg(Algorithm::pa);
    auto s = state_with(Algorithm::pa, vec({1.5, -2.0}), 0.25, c);
    CHECK(snapshot_record(s) == "PA,2,1.5,-2,0.25");
}

} // TEST_SUITE
