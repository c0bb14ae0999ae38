#include "olrbench/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "olrbench/evaluation.hpp"

namespace olrbench {

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x)
{
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny)
        d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps)
            return h;
    }
    return h;
}

void require_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValidationError(Stage::stats, "alpha must lie in (0, 1)");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw ValidationError(Stage::stats, "incomplete beta: shape parameters must be > 0");
    if (!(x >= 0.0 && x <= 1.0))
        throw ValidationError(Stage::stats, "incomplete beta: x must lie in [0, 1]");
    if (x == 0.0 || x == 1.0)
        return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double x, double df1, double df2)
{
    if (!(df1 > 0.0) || !(df2 > 0.0))
        throw ValidationError(Stage::stats, "F distribution: degrees of freedom must be > 0");
    if (!(x > 0.0))
        return 0.0;
    if (std::isinf(x))
        return 1.0;
    const double num = df1 * x;
    return regularized_incomplete_beta(df1 / 2.0, df2 / 2.0, num / (num + df2));
}

double f_quantile(double p, double df1, double df2)
{
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError(Stage::stats, "f_quantile: p must lie in (0, 1)");
    double lo = 0.0;
    double hi = 1.0;
    while (f_cdf(hi, df1, df2) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300)
            throw ValidationError(Stage::stats, "f_quantile: failed to bracket quantile");
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (f_cdf(mid, df1, df2) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::string_view to_string(CriticalMode mode) noexcept
{
    return mode == CriticalMode::table ? "table" : "exact";
}

CriticalMode parse_critical_mode(std::string_view text)
{
    if (text == "exact")
        return CriticalMode::exact;
    if (text == "table")
        return CriticalMode::table;
    throw ValidationError(Stage::config, "unknown critical mode '" + std::string(text) + "' (expected exact or table)");
}

namespace {

// Upper 5% points of F(df1, df2).
constexpr std::array<int, 4> kTableDf2{30, 40, 60, 120};
constexpr std::array<std::array<double, 4>, 10> kTableF05{{
    {4.1709, 4.0847, 4.0012, 3.9201},
    {3.3158, 3.2317, 3.1504, 3.0718},
    {2.9223, 2.8387, 2.7581, 2.6802},
    {2.6896, 2.6060, 2.5252, 2.4472},
    {2.5336, 2.4495, 2.3683, 2.2899},
    {2.4205, 2.3359, 2.2541, 2.1750},
    {2.3343, 2.2490, 2.1665, 2.0868},
    {2.2662, 2.1802, 2.0970, 2.0164},
    {2.2107, 2.1240, 2.0401, 1.9588},
    {2.1646, 2.0772, 1.9926, 1.9105},
}};

double f_critical_table(int df1, int df2, double alpha)
{
    if (alpha != 0.05)
        throw RangeError("F table only covers alpha = 0.05");
    if (df1 < 1 || df1 > 10)
        throw RangeError("F table covers df1 in 1..10, got " + std::to_string(df1));
    if (df2 < kTableDf2.front() || df2 > kTableDf2.back())
        throw RangeError("F table covers df2 in 30..120, got " + std::to_string(df2));
    const auto& row = kTableF05[static_cast<std::size_t>(df1 - 1)];
    for (std::size_t i = 0; i + 1 < kTableDf2.size(); ++i) {
        const int lo = kTableDf2[i];
        const int hi = kTableDf2[i + 1];
        if (df2 >= lo && df2 <= hi) {
            const double t = static_cast<double>(df2 - lo) / static_cast<double>(hi - lo);
            return row[i] + t * (row[i + 1] - row[i]);
        }
    }
    return row.back();
}

} // namespace

double f_critical(int df1, int df2, double alpha, CriticalMode mode)
{
    require_alpha(alpha);
    if (df1 < 1 || df2 < 1)
        throw ValidationError(Stage::stats, "f_critical: degrees of freedom must be >= 1");
    if (mode == CriticalMode::table)
        return f_critical_table(df1, df2, alpha);
    return f_quantile(1.0 - alpha, df1, df2);
}

VectorXd rank_row(const VectorXd& scores, bool lower_is_better)
{
    const Index k = scores.size();
    if (k < 2)
        throw ValidationError(Stage::stats, "rank_row: need at least two scores");
    if (!scores.allFinite())
        throw ValidationError(Stage::stats, "rank_row: scores must be finite");
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return lower_is_better ? scores(a) < scores(b) : scores(a) > scores(b);
    });
    VectorXd ranks(k);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i]))
            ++j;
        // positions i..j (0-based) share ranks i+1..j+1
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            ranks(order[t]) = mid;
        i = j + 1;
    }
    return ranks;
}

RankMatrix rank_matrix(const MatrixXd& scores, bool lower_is_better)
{
    RankMatrix out;
    out.ranks.resize(scores.rows(), scores.cols());
    for (Index c = 0; c < scores.cols(); ++c)
        out.ranks.col(c) = rank_row(scores.col(c), lower_is_better);
    out.average_ranks = average_ranks(out.ranks);
    return out;
}

VectorXd average_ranks(const MatrixXd& ranks)
{
    if (ranks.cols() == 0)
        throw ValidationError(Stage::stats, "average_ranks: no datasets");
    return ranks.rowwise().mean();
}

double friedman_chi2(const VectorXd& average_ranks, Index n_datasets)
{
    const Index k = average_ranks.size();
    if (k < 2)
        throw ValidationError(Stage::stats, "friedman_chi2: need at least two models");
    if (n_datasets < 1)
        throw ValidationError(Stage::stats, "friedman_chi2: need at least one dataset");
    const double kd = static_cast<double>(k);
    const double n = static_cast<double>(n_datasets);
    return 12.0 * n / (kd * (kd + 1.0)) * (average_ranks.squaredNorm() - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
}

double iman_davenport(double chi2, Index k, Index n_datasets)
{
    const double n = static_cast<double>(n_datasets);
    const double upper = n * static_cast<double>(k - 1);
    const double denom = upper - chi2;
    if (!(denom > 1e-12 * std::max(1.0, upper))) {
        std::ostringstream msg;
        msg << "Iman-Davenport statistic is degenerate: chi2 = " << chi2 << " reaches N(k-1) = " << upper
            << " (identical rankings on every dataset)";
        throw DegenerateStatisticError(msg.str());
    }
    return (n - 1.0) * chi2 / denom;
}

bool friedman_decision(double statistic, double critical)
{
    return statistic > critical;
}

FriedmanResult friedman_test(const VectorXd& average_ranks, Index n_datasets, double alpha, CriticalMode mode)
{
    require_alpha(alpha);
    const Index k = average_ranks.size();
    FriedmanResult r;
    r.alpha = alpha;
    r.chi2 = friedman_chi2(average_ranks, n_datasets);
    r.df1 = static_cast<int>(k - 1);
    r.df2 = static_cast<int>((k - 1) * (n_datasets - 1));
    r.critical_mode = mode;
    try {
        r.ff = iman_davenport(r.chi2, k, n_datasets);
    } catch (const DegenerateStatisticError&) {
        r.degenerate = true;
        r.ff = std::numeric_limits<double>::infinity();
    }
    if (r.df2 < 1) {
        // A single dataset leaves no residual degrees of freedom.
        r.critical_value = std::numeric_limits<double>::quiet_NaN();
        r.reject = false;
        return r;
    }
    r.critical_value = f_critical(r.df1, r.df2, alpha, mode);
    r.reject = friedman_decision(r.ff, r.critical_value);
    return r;
}

namespace {

// q_alpha for k = 2..8 models.
constexpr std::array<double, 7> kNemenyiQ05{1.960, 2.343, 2.569, 2.728, 2.850, 2.948, 3.031};
constexpr std::array<double, 7> kNemenyiQ10{1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780};

} // namespace

double nemenyi_q(Index k, double alpha)
{
    if (k < 2 || k > 8)
        throw RangeError("Nemenyi q table covers k = 2..8, got " + std::to_string(k));
    const auto i = static_cast<std::size_t>(k - 2);
    if (alpha == 0.05)
        return kNemenyiQ05[i];
    if (alpha == 0.1)
        return kNemenyiQ10[i];
    std::ostringstream msg;
    msg << "Nemenyi q table covers alpha = 0.05 and 0.1, got " << alpha;
    throw RangeError(msg.str());
}

double nemenyi_cd(Index k, Index n_datasets, double alpha)
{
    if (n_datasets < 1)
        throw ValidationError(Stage::stats, "nemenyi_cd: need at least one dataset");
    const double kd = static_cast<double>(k);
    return nemenyi_q(k, alpha) * std::sqrt(kd * (kd + 1.0) / (6.0 * static_cast<double>(n_datasets)));
}

MatrixXd pairwise_rank_diffs(const VectorXd& average_ranks)
{
    const Index k = average_ranks.size();
    return (average_ranks.replicate(1, k) - average_ranks.transpose().replicate(k, 1)).cwiseAbs();
}

BoolMatrix nemenyi_verdicts(const MatrixXd& diffs, double cd)
{
    return (diffs.array() > cd).matrix();
}

NemenyiResult nemenyi_test(const VectorXd& average_ranks, Index n_datasets, const std::vector<double>& alphas)
{
    NemenyiResult out;
    out.alphas = alphas;
    out.diffs = pairwise_rank_diffs(average_ranks);
    for (double alpha : alphas) {
        out.q.push_back(nemenyi_q(average_ranks.size(), alpha));
        out.cd.push_back(nemenyi_cd(average_ranks.size(), n_datasets, alpha));
        out.significant.push_back(nemenyi_verdicts(out.diffs, out.cd.back()));
    }
    return out;
}

SignificanceAnalysis analyze(const ScoreMatrix& matrix, const StatsOptions& options)
{
    if (options.alphas.empty())
        throw ValidationError(Stage::stats, "at least one alpha is required");
    for (double a : options.alphas)
        require_alpha(a);
    if (matrix.n_models() < 2)
        throw ValidationError(Stage::stats, "need at least two models to rank");

    SignificanceAnalysis out;
    out.models = matrix.models;
    std::vector<Index> kept;
    for (Index c = 0; c < matrix.n_datasets(); ++c) {
        const bool bad = (matrix.diverged.size() > 0 && matrix.diverged.col(c).any()) || !matrix.scores.col(c).allFinite();
        if (bad) {
            out.excluded_datasets.push_back(matrix.datasets[static_cast<std::size_t>(c)]);
            out.warnings.push_back("WARNING: dataset '" + matrix.datasets[static_cast<std::size_t>(c)] +
                                   "' has a diverged cell and is excluded from ranking");
        } else {
            kept.push_back(c);
            out.datasets.push_back(matrix.datasets[static_cast<std::size_t>(c)]);
        }
    }
    if (kept.empty())
        throw ValidationError(Stage::stats, "no dataset column is free of divergence; nothing to rank");

    out.scores = matrix.scores(Eigen::all, kept);
    out.ranks = rank_matrix(out.scores, options.lower_is_better);
    const Index k = out.scores.rows();
    const Index n = out.scores.cols();
    if (k < 3)
        out.warnings.push_back("low power: Friedman test with k = " + std::to_string(k) + " < 3 models");
    if (n < 5)
        out.warnings.push_back("low power: Friedman test with N = " + std::to_string(n) + " < 5 datasets");

    for (double alpha : options.alphas) {
        CriticalMode mode = options.critical_mode;
        if (mode == CriticalMode::table) {
            try {
                f_critical(static_cast<int>(k - 1), static_cast<int>((k - 1) * (n - 1)), alpha, mode);
            } catch (const RangeError& e) {
                std::ostringstream msg;
                msg << "table critical value unavailable at alpha = " << alpha << " (" << e.what()
                    << "); using exact mode";
                out.warnings.push_back(msg.str());
                mode = CriticalMode::exact;
            }
        }
        out.friedman.push_back(friedman_test(out.ranks.average_ranks, n, alpha, mode));
    }
    if (out.friedman.front().degenerate)
        out.warnings.push_back("identical rankings on every dataset: Iman-Davenport statistic is unbounded");
    if (n < 2)
        out.warnings.push_back("a single dataset leaves no degrees of freedom for the F test");

    if (k >= 2 && k <= 8) {
        out.nemenyi = nemenyi_test(out.ranks.average_ranks, n, options.alphas);
    } else {
        out.warnings.push_back("Nemenyi q table covers k = 2..8; post-hoc test skipped for k = " + std::to_string(k));
        out.nemenyi.diffs = pairwise_rank_diffs(out.ranks.average_ranks);
    }
    return out;
}

} // namespace olrbench
