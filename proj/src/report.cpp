#include "olrbench/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace olrbench {

namespace {

std::string fmt(double v, int precision)
{
    if (std::isnan(v))
        return "n/a";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << v;
    return out.str();
}

std::string fmt_general(double v)
{
    if (!std::isfinite(v))
        return fmt(v, 0);
    std::ostringstream out;
    out << std::setprecision(6) << v;
    return out.str();
}

std::string alpha_label(double alpha)
{
    std::ostringstream out;
    out << "α = " << alpha;
    return out.str();
}

std::string confidence(double alpha)
{
    std::ostringstream out;
    out << std::setprecision(4) << (1.0 - alpha) * 100.0 << "%";
    return out.str();
}

} // namespace

std::string render_analysis(const SignificanceAnalysis& a)
{
    std::ostringstream out;
    const auto k = static_cast<Index>(a.models.size());
    const Index n = a.scores.cols();

    out << "## Scores and ranks\n\n";
    out << "Lower score is better; rank 1 is best. Cells show `score (rank)`.\n\n";
    out << "| Dataset |";
    for (const auto& m : a.models)
        out << ' ' << m << " |";
    out << "\n|---|";
    for (Index i = 0; i < k; ++i)
        out << "---|";
    out << '\n';
    for (Index c = 0; c < n; ++c) {
        out << "| " << a.datasets[static_cast<std::size_t>(c)] << " |";
        for (Index i = 0; i < k; ++i)
            out << ' ' << fmt_general(a.scores(i, c)) << " (" << fmt_general(a.ranks.ranks(i, c)) << ") |";
        out << '\n';
    }
    out << "| **Average rank** |";
    for (Index i = 0; i < k; ++i)
        out << ' ' << fmt(a.ranks.average_ranks(i), 3) << " |";
    out << "\n\n";
    if (!a.excluded_datasets.empty()) {
        out << "Excluded from ranking (diverged):";
        for (const auto& d : a.excluded_datasets)
            out << ' ' << d;
        out << "\n\n";
    }

    out << "## Friedman test\n\n";
    out << "k = " << k << " models, N = " << n << " datasets.\n\n";
    if (!a.friedman.empty()) {
        const auto& f0 = a.friedman.front();
        out << "- χ²_F = " << fmt(f0.chi2, 4) << '\n';
        out << "- F_F (Iman-Davenport) = " << fmt(f0.ff, 4) << '\n';
        out << "- degrees of freedom: df1 = " << f0.df1 << ", df2 = " << f0.df2 << "\n\n";
    }
    for (const auto& f : a.friedman) {
        out << "- " << alpha_label(f.alpha) << ": critical F(" << f.df1 << ", " << f.df2
            << ") = " << fmt(f.critical_value, 5) << " (" << to_string(f.critical_mode) << "). ";
        if (f.reject)
            out << "F_F = " << fmt(f.ff, 4) << " > " << fmt(f.critical_value, 5) << ": reject the null hypothesis with "
                << confidence(f.alpha) << " confidence.\n";
        else
            out << "F_F = " << fmt(f.ff, 4) << " does not exceed " << fmt(f.critical_value, 5)
                << ": retain the null hypothesis (no significant difference at " << confidence(f.alpha)
                << " confidence).\n";
    }
    out << '\n';

    out << "## Nemenyi post-hoc test\n\n";
    for (std::size_t i = 0; i < a.nemenyi.cd.size(); ++i)
        out << "- CD at " << alpha_label(a.nemenyi.alphas[i]) << ": q = " << fmt(a.nemenyi.q[i], 3)
            << ", CD = " << fmt(a.nemenyi.cd[i], 4) << '\n';
    out << "\n### Absolute differences in average ranks\n\n| Model |";
    for (const auto& m : a.models)
        out << ' ' << m << " |";
    out << "\n|---|";
    for (Index i = 0; i < k; ++i)
        out << "---|";
    out << '\n';
    for (Index i = 0; i < k; ++i) {
        out << "| " << a.models[static_cast<std::size_t>(i)] << " |";
        for (Index j = 0; j < k; ++j)
            out << ' ' << (i == j ? std::string("-") : fmt(a.nemenyi.diffs(i, j), 3)) << " |";
        out << '\n';
    }
    out << "\n### Pairwise verdicts\n\n";
    for (Index i = 0; i < k; ++i) {
        for (Index j = i + 1; j < k; ++j) {
            const auto& mi = a.models[static_cast<std::size_t>(i)];
            const auto& mj = a.models[static_cast<std::size_t>(j)];
            out << "- " << mi << " vs " << mj << ": |ΔR| = " << fmt(a.nemenyi.diffs(i, j), 3);
            std::vector<std::string> sig, not_sig;
            for (std::size_t t = 0; t < a.nemenyi.significant.size(); ++t) {
                const auto label = alpha_label(a.nemenyi.alphas[t]) + " (CD " + fmt(a.nemenyi.cd[t], 3) + ")";
                (a.nemenyi.significant[t](i, j) ? sig : not_sig).push_back(label);
            }
            auto join = [](const std::vector<std::string>& v) {
                std::string s;
                for (std::size_t t = 0; t < v.size(); ++t)
                    s += (t ? ", " : "") + v[t];
                return s;
            };
            if (a.nemenyi.significant.empty())
                out << "; no Nemenyi critical difference available";
            if (!sig.empty()) {
                const double ri = a.ranks.average_ranks(i);
                const double rj = a.ranks.average_ranks(j);
                out << "; significant at " << join(sig) << ", " << (ri < rj ? mi : mj) << " ranks better";
            }
            if (!not_sig.empty())
                out << "; not significant at " << join(not_sig);
            out << '\n';
        }
    }
    if (!a.warnings.empty()) {
        out << "\n## Warnings\n\n";
        for (const auto& w : a.warnings)
            out << "- " << w << '\n';
    }
    return out.str();
}

std::string render_report(const ResultsArchive& archive)
{
    verify_archive(archive);
    std::ostringstream out;
    out << "# Online regression significance report\n\n";
    out << "- tool version: " << archive.tool_version << '\n';
    if (!archive.started_at.empty())
        out << "- run: " << archive.started_at << " to " << archive.finished_at << '\n';
    out << "- protocol: " << archive.matrix.folds << "-fold cross-validation, " << archive.matrix.seeds.size()
        << " seed(s), mean test MSE over the first " << archive.matrix.first_batches << " mini-batches\n\n";
    out << render_analysis(archive.analysis);
    std::vector<std::string> extra;
    for (const auto& w : archive.warnings)
        if (std::find(archive.analysis.warnings.begin(), archive.analysis.warnings.end(), w) ==
            archive.analysis.warnings.end())
            extra.push_back(w);
    if (!extra.empty()) {
        out << "\n## Evaluation warnings\n\n";
        for (const auto& w : extra)
            out << "- " << w << '\n';
    }
    return out.str();
}

std::vector<CdGroup> cd_groups(const VectorXd& average_ranks, double cd)
{
    const Index k = average_ranks.size();
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return average_ranks(a) < average_ranks(b); });
    std::vector<CdGroup> groups;
    Index last_end = -1;
    for (Index i = 0; i < k; ++i) {
        Index j = i;
        while (j + 1 < k && average_ranks(order[static_cast<std::size_t>(j + 1)]) -
                                    average_ranks(order[static_cast<std::size_t>(i)]) <= cd)
            ++j;
        if (j > i && j > last_end) {
            CdGroup g;
            g.members.assign(order.begin() + i, order.begin() + j + 1);
            g.low_rank = average_ranks(order[static_cast<std::size_t>(i)]);
            g.high_rank = average_ranks(order[static_cast<std::size_t>(j)]);
            groups.push_back(std::move(g));
            last_end = j;
        }
    }
    return groups;
}

namespace {

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

std::string cd_diagram(const VectorXd& average_ranks, double cd, const std::vector<std::string>& labels,
                       const std::string& title)
{
    const Index k = average_ranks.size();
    if (k < 2 || k > 20)
        throw ValidationError(Stage::report, "cd_diagram supports 2..20 models, got " + std::to_string(k));
    if (static_cast<Index>(labels.size()) != k)
        throw ValidationError(Stage::report, "cd_diagram: one label per model is required");
    if (!average_ranks.allFinite() || !std::isfinite(cd) || cd < 0)
        throw ValidationError(Stage::report, "cd_diagram: ranks and CD must be finite");

    const double width = 860.0;
    const double margin = 180.0;
    const double axis_y = 90.0;
    const auto groups = cd_groups(average_ranks, cd);
    const double label_top = axis_y + 30.0 + 8.0 * static_cast<double>(groups.size());
    const double row_h = 20.0;
    const auto half = (k + 1) / 2;
    const double height = label_top + row_h * static_cast<double>(half) + 30.0;
    auto x_of = [&](double rank) {
        return margin + (rank - 1.0) / static_cast<double>(k - 1) * (width - 2.0 * margin);
    };

    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return average_ranks(a) < average_ranks(b); });

    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        svg << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
            << "</text>\n";

    // CD scale bar
    const double bar_y = 42.0;
    svg << "<g class=\"cd-bar\" data-cd=\"" << std::setprecision(6) << cd << std::setprecision(2) << "\">\n";
    svg << "  <line x1=\"" << x_of(1.0) << "\" y1=\"" << bar_y << "\" x2=\"" << x_of(1.0 + cd) << "\" y2=\"" << bar_y
        << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    svg << "  <line x1=\"" << x_of(1.0) << "\" y1=\"" << bar_y - 5 << "\" x2=\"" << x_of(1.0) << "\" y2=\"" << bar_y + 5
        << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << x_of(1.0 + cd) << "\" y1=\"" << bar_y - 5 << "\" x2=\"" << x_of(1.0 + cd) << "\" y2=\""
        << bar_y + 5 << "\" stroke=\"black\"/>\n";
    svg << "  <text x=\"" << (x_of(1.0) + x_of(1.0 + cd)) / 2 << "\" y=\"" << bar_y - 8
        << "\" text-anchor=\"middle\">CD = " << fmt(cd, 3) << "</text>\n</g>\n";

    // axis
    svg << "<line class=\"axis\" x1=\"" << x_of(1.0) << "\" y1=\"" << axis_y << "\" x2=\"" << x_of(double(k))
        << "\" y2=\"" << axis_y << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    for (Index r = 1; r <= k; ++r) {
        const double x = x_of(double(r));
        svg << "<line x1=\"" << x << "\" y1=\"" << axis_y - 6 << "\" x2=\"" << x << "\" y2=\"" << axis_y
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << x << "\" y=\"" << axis_y - 10 << "\" text-anchor=\"middle\">" << r << "</text>\n";
    }

    // connectors
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& grp = groups[g];
        std::string members;
        for (std::size_t t = 0; t < grp.members.size(); ++t)
            members += (t ? "|" : "") + xml_escape(labels[static_cast<std::size_t>(grp.members[t])]);
        const double y = axis_y + 14.0 + 8.0 * static_cast<double>(g);
        svg << "<line class=\"cd-group\" data-members=\"" << members << "\" x1=\"" << x_of(grp.low_rank) - 4
            << "\" y1=\"" << y << "\" x2=\"" << x_of(grp.high_rank) + 4 << "\" y2=\"" << y
            << "\" stroke=\"black\" stroke-width=\"4\" stroke-linecap=\"round\"/>\n";
    }

    // markers with elbow labels; better half to the left
    for (Index pos = 0; pos < k; ++pos) {
        const Index m = order[static_cast<std::size_t>(pos)];
        const double r = average_ranks(m);
        const double x = x_of(r);
        const bool left = pos < half;
        const Index row = left ? pos : (k - 1 - pos);
        const double y = label_top + row_h * static_cast<double>(row);
        const double end_x = left ? margin - 20.0 : width - margin + 20.0;
        const auto& label = xml_escape(labels[static_cast<std::size_t>(m)]);
        svg << "<g class=\"model\">\n";
        svg << "  <circle class=\"marker\" data-model=\"" << label << "\" data-rank=\"" << std::setprecision(6) << r
            << std::setprecision(2) << "\" cx=\"" << x << "\" cy=\"" << axis_y << "\" r=\"3.5\" fill=\"black\"/>\n";
        svg << "  <polyline points=\"" << x << ',' << axis_y << ' ' << x << ',' << y << ' ' << end_x << ',' << y
            << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
        svg << "  <text x=\"" << (left ? end_x - 5 : end_x + 5) << "\" y=\"" << y + 4 << "\" text-anchor=\""
            << (left ? "end" : "start") << "\">" << label << " (" << fmt(r, 3) << ")</text>\n";
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_score_csv(const ScoreMatrix& m, std::ostream& out)
{
    out << "model";
    for (const auto& d : m.datasets)
        out << ',' << d;
    out << '\n' << std::setprecision(17);
    for (Index i = 0; i < m.n_models(); ++i) {
        out << m.models[static_cast<std::size_t>(i)];
        for (Index j = 0; j < m.n_datasets(); ++j) {
            const bool div = (m.diverged.size() > 0 && m.diverged(i, j)) || !std::isfinite(m.scores(i, j));
            out << ',';
            if (div)
                out << "diverged";
            else
                out << m.scores(i, j);
        }
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_cells(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        auto first = cell.find_first_not_of(" \t\r");
        auto last = cell.find_last_not_of(" \t\r");
        cells.push_back(first == std::string::npos ? std::string{} : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

} // namespace

ScoreMatrix read_score_csv(std::istream& in, const std::string& source)
{
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            header = split_cells(line);
    }
    if (header.size() < 2)
        throw IngestionError(source + ": score CSV needs a header 'model,<dataset>...' with at least one dataset");
    ScoreMatrix m;
    m.datasets.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> div_rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto cells = split_cells(line);
        if (cells.size() != header.size())
            throw IngestionError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(cells.size()));
        m.models.push_back(cells[0]);
        std::vector<double> row;
        std::vector<bool> div;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const auto& text = cells[c];
            if (text == "diverged" || text.empty()) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                div.push_back(true);
                continue;
            }
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
                throw IngestionError(source + ":" + std::to_string(line_no) + " column '" + header[c] +
                                     "': invalid score '" + text + "'");
            row.push_back(v);
            div.push_back(false);
        }
        rows.push_back(std::move(row));
        div_rows.push_back(std::move(div));
    }
    if (rows.empty())
        throw IngestionError(source + ": score CSV has no model rows");
    const auto k = static_cast<Index>(rows.size());
    const auto n = static_cast<Index>(m.datasets.size());
    m.scores.resize(k, n);
    m.diverged.resize(k, n);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < n; ++j) {
            m.scores(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            m.diverged(i, j) = div_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    m.first_batches = 0;
    m.folds = 0;
    return m;
}

ScoreMatrix load_score_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IngestionError(path + ": cannot open score CSV");
    return read_score_csv(in, path);
}

void write_traces_csv(const std::vector<MseTrace>& traces, std::ostream& out)
{
    out << "learner,dataset,seed,fold,batch,mse,diverged\n" << std::setprecision(17);
    for (const auto& t : traces) {
        for (std::size_t b = 0; b < t.values.size(); ++b)
            out << t.learner << ',' << t.dataset << ',' << t.seed << ',' << t.fold << ',' << b + 1 << ','
                << t.values[b] << ",0\n";
        if (t.diverged)
            out << t.learner << ',' << t.dataset << ',' << t.seed << ',' << t.fold << ',' << t.diverged_at + 1
                << ",,1\n";
    }
}

} // namespace olrbench
