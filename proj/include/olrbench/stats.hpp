#pragma once

#include <string>
#include <vector>

#include "olrbench/core.hpp"

namespace olrbench {

struct ScoreMatrix;

// ---------------------------------------------------------------------------
// F distribution

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// P(F <= x) for the F distribution with (df1, df2) degrees of freedom.
double f_cdf(double x, double df1, double df2);

/// Inverse of f_cdf by bisection, to 1e-10 absolute in x.
double f_quantile(double p, double df1, double df2);

enum class CriticalMode { exact, table };

std::string_view to_string(CriticalMode mode) noexcept;
CriticalMode parse_critical_mode(std::string_view text);

/// Upper-alpha critical value of F(df1, df2).
///
/// exact: f_quantile(1 - alpha). table: linear interpolation in df2 over the
/// embedded alpha = 0.05 quantile table (df1 1..10, df2 30/40/60/120). Table
/// mode throws RangeError for any alpha other than 0.05 or df outside the table.
double f_critical(int df1, int df2, double alpha, CriticalMode mode = CriticalMode::exact);

// ---------------------------------------------------------------------------
// Ranks

/// Fractional ranks, 1 = best. Ties share the mean of the ranks they span.
VectorXd rank_row(const VectorXd& scores, bool lower_is_better = true);

struct RankMatrix {
    MatrixXd ranks;          // k x N, one column per dataset
    VectorXd average_ranks;  // k
};

/// Ranks each column of a k x N score grid.
RankMatrix rank_matrix(const MatrixXd& scores, bool lower_is_better = true);

VectorXd average_ranks(const MatrixXd& ranks);

// ---------------------------------------------------------------------------
// Friedman / Iman-Davenport

/// 12N / (k(k+1)) * [sum R_j^2 - k(k+1)^2 / 4], with k = R.size().
double friedman_chi2(const VectorXd& average_ranks, Index n_datasets);

/// (N-1) chi2 / (N(k-1) - chi2). Throws DegenerateStatisticError when the
/// denominator is not positive.
double iman_davenport(double chi2, Index k, Index n_datasets);

/// Reject iff the statistic strictly exceeds the critical value.
bool friedman_decision(double statistic, double critical);

struct FriedmanResult {
    double chi2 = 0.0;
    double ff = 0.0;
    int df1 = 0;
    int df2 = 0;
    double alpha = 0.05;
    double critical_value = 0.0;
    bool reject = false;
    CriticalMode critical_mode = CriticalMode::exact;
    bool degenerate = false;  // identical rankings on every dataset; ff is +inf
};

/// Full test at one alpha. A degenerate Iman-Davenport statistic (perfect
/// agreement between datasets) is reported as ff = +inf and rejection.
FriedmanResult friedman_test(const VectorXd& average_ranks, Index n_datasets, double alpha,
                             CriticalMode mode = CriticalMode::exact);

// ---------------------------------------------------------------------------
// Nemenyi

/// Studentized-range based q_alpha for k = 2..8 and alpha in {0.05, 0.1}.
double nemenyi_q(Index k, double alpha);

/// q_alpha * sqrt(k(k+1) / (6N)).
double nemenyi_cd(Index k, Index n_datasets, double alpha);

/// |R_i - R_j|
MatrixXd pairwise_rank_diffs(const VectorXd& average_ranks);

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// significant(i, j) iff diffs(i, j) > cd.
BoolMatrix nemenyi_verdicts(const MatrixXd& diffs, double cd);

struct NemenyiResult {
    std::vector<double> alphas;
    std::vector<double> q;
    std::vector<double> cd;
    MatrixXd diffs;
    std::vector<BoolMatrix> significant;  // one per alpha
};

NemenyiResult nemenyi_test(const VectorXd& average_ranks, Index n_datasets, const std::vector<double>& alphas);

// ---------------------------------------------------------------------------
// End-to-end significance analysis of a score matrix

struct StatsOptions {
    std::vector<double> alphas{0.05, 0.1};
    CriticalMode critical_mode = CriticalMode::exact;
    bool lower_is_better = true;
};

struct SignificanceAnalysis {
    std::vector<std::string> models;
    std::vector<std::string> datasets;  // datasets that entered the ranking
    std::vector<std::string> excluded_datasets;
    MatrixXd scores;  // k x N restricted to `datasets`
    RankMatrix ranks;
    std::vector<FriedmanResult> friedman;  // one per alpha
    NemenyiResult nemenyi;                 // empty when k is outside the q table
    std::vector<std::string> warnings;
};

/// Drops every dataset column holding a diverged cell, ranks the rest and runs
/// both tests at each requested alpha. Warns when k < 3 or N < 5.
SignificanceAnalysis analyze(const ScoreMatrix& matrix, const StatsOptions& options = {});

} // namespace olrbench
