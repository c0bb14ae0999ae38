// olrbench command line: generate-data, run, stats, report, diagram.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error,
// 3 run finished but some cells diverged.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "olrbench/experiment.hpp"
#include "olrbench/report.hpp"

namespace {

using namespace olrbench;

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDiverged = 3;

void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
        std::cout << text;
    else
        write_text_atomic(path, text);
}

std::string pick(const std::string& flag, const std::string& configured)
{
    return flag.empty() ? configured : flag;
}

struct GenerateOptions {
    std::string preset;
    SyntheticSpec spec;
    std::string out;
};

int cmd_generate(const GenerateOptions& o, const CLI::App& sub)
{
    SyntheticSpec spec = o.preset.empty() ? SyntheticSpec{} : synthetic_preset(o.preset);
    if (sub.count("--points"))
        spec.n_points = o.spec.n_points;
    if (sub.count("--dims"))
        spec.n_dims = o.spec.n_dims;
    if (sub.count("--noise"))
        spec.noise_sigma = o.spec.noise_sigma;
    if (sub.count("--seed"))
        spec.seed = o.spec.seed;
    if (sub.count("--coef-min"))
        spec.coef_min = o.spec.coef_min;
    if (sub.count("--coef-max"))
        spec.coef_max = o.spec.coef_max;
    const Dataset data = generate_synthetic(spec, o.preset.empty() ? "synthetic" : o.preset);
    std::ostringstream out;
    write_csv(data, out);
    emit(o.out, out.str());
    return 0;
}

struct RunOptions {
    std::string config;
    std::string archive, report, scores, traces, diagram;
    unsigned workers = 0;
    double diagram_alpha = 0.05;
};

std::string diagram_for(const SignificanceAnalysis& a, double alpha)
{
    for (std::size_t i = 0; i < a.nemenyi.alphas.size(); ++i)
        if (a.nemenyi.alphas[i] == alpha)
            return cd_diagram(a.ranks.average_ranks, a.nemenyi.cd[i], a.models,
                              "Critical difference, alpha = " + std::to_string(alpha).substr(0, 4));
    throw ValidationError(Stage::report, "no Nemenyi CD for the requested alpha; add it to the stats alphas");
}

int cmd_run(const RunOptions& o)
{
    const RunConfig config = load_run_config(o.config);
    const std::string archive_path = pick(o.archive, config.output.archive);
    const std::string report_path = pick(o.report, config.output.report);
    const std::string scores_path = pick(o.scores, config.output.scores);
    const std::string traces_path = pick(o.traces, config.output.traces);
    const std::string diagram_path = pick(o.diagram, config.output.diagram);

    RunConfig effective = config;
    effective.output.traces = traces_path == "-" ? std::string{} : traces_path;
    const ResultsArchive archive = run_experiment(effective, o.workers);

    if (!archive_path.empty())
        write_archive(archive, archive_path);
    if (!scores_path.empty()) {
        std::ostringstream out;
        write_score_csv(archive.matrix, out);
        emit(scores_path, out.str());
    }
    if (!traces_path.empty()) {
        std::ostringstream out;
        write_traces_csv(archive.traces, out);
        emit(traces_path, out.str());
    }
    if (!report_path.empty())
        emit(report_path, render_report(archive));
    if (!diagram_path.empty())
        emit(diagram_path, diagram_for(archive.analysis, o.diagram_alpha));

    for (const auto& w : archive.warnings)
        std::cerr << "warning: " << w << '\n';
    for (const auto& f : archive.analysis.friedman)
        std::cerr << "Friedman alpha=" << f.alpha << ": F_F=" << f.ff << " critical=" << f.critical_value << " -> "
                  << (f.reject ? "reject" : "retain") << '\n';

    bool diverged = false;
    for (const auto& t : archive.traces)
        diverged = diverged || t.diverged;
    return diverged ? kExitDiverged : 0;
}

struct StatsCmdOptions {
    std::string scores;
    std::vector<double> alphas;
    std::string mode = "exact";
    bool higher_is_better = false;
    std::string out;
};

int cmd_stats(const StatsCmdOptions& o)
{
    const ScoreMatrix matrix = load_score_csv(o.scores);
    StatsOptions opts;
    if (!o.alphas.empty())
        opts.alphas = o.alphas;
    opts.critical_mode = parse_critical_mode(o.mode);
    opts.lower_is_better = !o.higher_is_better;
    const auto analysis = analyze(matrix, opts);
    emit(o.out, "# Significance analysis of " + o.scores + "\n\n" + render_analysis(analysis));
    return 0;
}

int cmd_report(const std::string& archive_path, const std::string& out)
{
    emit(out, render_report(read_archive(archive_path)));
    return 0;
}

int cmd_diagram(const std::string& archive_path, const std::string& scores_path, double alpha, const std::string& out)
{
    SignificanceAnalysis analysis;
    if (!archive_path.empty()) {
        const auto archive = read_archive(archive_path);
        verify_archive(archive);
        analysis = archive.analysis;
        if (std::find(analysis.nemenyi.alphas.begin(), analysis.nemenyi.alphas.end(), alpha) ==
            analysis.nemenyi.alphas.end()) {
            StatsOptions opts = archive.stats_options;
            opts.alphas = {alpha};
            analysis = analyze(archive.matrix, opts);
        }
    } else {
        StatsOptions opts;
        opts.alphas = {alpha};
        analysis = analyze(load_score_csv(scores_path), opts);
    }
    emit(out, diagram_for(analysis, alpha));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Benchmark online linear-regression learners and test the significance of their differences"};
    app.require_subcommand(1);

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate-data", "Write a synthetic linear dataset as CSV");
    generate->add_option("--spec", gen.preset, "Preset shape: ds1, ds2, ds3, ds4");
    generate->add_option("--points", gen.spec.n_points, "Number of rows");
    generate->add_option("--dims", gen.spec.n_dims, "Number of feature columns");
    generate->add_option("--noise", gen.spec.noise_sigma, "Gaussian noise std-dev");
    generate->add_option("--seed", gen.spec.seed, "RNG seed");
    generate->add_option("--coef-min", gen.spec.coef_min, "Lower bound of true coefficients");
    generate->add_option("--coef-max", gen.spec.coef_max, "Upper bound of true coefficients");
    generate->add_option("-o,--out", gen.out, "Output CSV (stdout when omitted)");

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run the full benchmark described by a config file");
    run_cmd->add_option("-c,--config", run.config, "Run-config JSON")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--archive", run.archive, "Results archive (JSON)");
    run_cmd->add_option("--report", run.report, "Markdown report ('-' for stdout)");
    run_cmd->add_option("--scores", run.scores, "Score matrix CSV");
    run_cmd->add_option("--traces", run.traces, "Per-batch MSE traces CSV");
    run_cmd->add_option("--diagram", run.diagram, "Critical-difference diagram (SVG)");
    run_cmd->add_option("--diagram-alpha", run.diagram_alpha, "Alpha used for the diagram CD");
    run_cmd->add_option("-j,--workers", run.workers, "Worker threads (default: config value)");

    StatsCmdOptions st;
    auto* stats = app.add_subcommand("stats", "Friedman/Nemenyi analysis of a CSV score matrix");
    stats->add_option("--scores", st.scores, "CSV with models as rows, datasets as columns")
        ->required()
        ->check(CLI::ExistingFile);
    stats->add_option("--alpha", st.alphas, "Significance level (repeatable)");
    stats->add_option("--critical-mode", st.mode, "exact or table")->check(CLI::IsMember({"exact", "table"}));
    stats->add_flag("--higher-is-better", st.higher_is_better, "Rank larger scores first");
    stats->add_option("-o,--out", st.out, "Output report (stdout when omitted)");

    std::string report_archive, report_out;
    auto* report = app.add_subcommand("report", "Render the report of a results archive");
    report->add_option("--archive", report_archive, "Results archive")->required()->check(CLI::ExistingFile);
    report->add_option("-o,--out", report_out, "Output report (stdout when omitted)");

    std::string diagram_archive, diagram_scores, diagram_out;
    double diagram_alpha = 0.05;
    auto* diagram = app.add_subcommand("diagram", "Draw a critical-difference diagram (SVG)");
    auto* src_archive = diagram->add_option("--archive", diagram_archive, "Results archive")->check(CLI::ExistingFile);
    auto* src_scores = diagram->add_option("--scores", diagram_scores, "Score matrix CSV")->check(CLI::ExistingFile);
    src_archive->excludes(src_scores);
    diagram->add_option("--alpha", diagram_alpha, "Significance level of the CD");
    diagram->add_option("-o,--out", diagram_out, "Output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    std::string stage = "cli";
    try {
        if (*generate) {
            stage = "data";
            return cmd_generate(gen, *generate);
        }
        if (*run_cmd)
            return cmd_run(run);
        if (*stats)
            return cmd_stats(st);
        if (*report)
            return cmd_report(report_archive, report_out);
        if (*diagram) {
            if (diagram_archive.empty() && diagram_scores.empty())
                throw ValidationError(Stage::report, "diagram needs --archive or --scores");
            return cmd_diagram(diagram_archive, diagram_scores, diagram_alpha, diagram_out);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error [" << to_string(e.stage()) << "]: " << e.what() << '\n';
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.stage()) << "]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
