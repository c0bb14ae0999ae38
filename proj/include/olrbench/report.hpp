#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "olrbench/experiment.hpp"

namespace olrbench {

/// Markdown report: score table with ranks, Friedman and Iman-Davenport
/// statistics with the decision at every alpha, Nemenyi CDs, the pairwise
/// rank-difference matrix and one verdict line per model pair. Throws
/// IntegrityError when the archive is internally inconsistent.
std::string render_report(const ResultsArchive& archive);

/// Report straight from an analysis, without archive metadata.
std::string render_analysis(const SignificanceAnalysis& analysis);

/// A horizontal connector in a critical-difference diagram: all models whose
/// indices are listed have pairwise rank differences <= cd.
struct CdGroup {
    std::vector<Index> members;  // model indices, ascending average rank
    double low_rank = 0.0;
    double high_rank = 0.0;
};

/// Maximal runs of rank-sorted models spanning at most `cd`. Singletons are
/// not connectors and are omitted.
std::vector<CdGroup> cd_groups(const VectorXd& average_ranks, double cd);

/// Standalone SVG critical-difference diagram. 2 <= k <= 20.
std::string cd_diagram(const VectorXd& average_ranks, double cd, const std::vector<std::string>& labels,
                       const std::string& title = {});

/// Models as rows, datasets as columns, header "model,<dataset>...". Diverged
/// cells are written as "diverged".
void write_score_csv(const ScoreMatrix& matrix, std::ostream& out);
ScoreMatrix read_score_csv(std::istream& in, const std::string& source = "<scores>");
ScoreMatrix load_score_csv(const std::string& path);

/// learner,dataset,seed,fold,batch,mse,diverged
void write_traces_csv(const std::vector<MseTrace>& traces, std::ostream& out);

} // namespace olrbench
