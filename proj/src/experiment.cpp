#include "olrbench/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <unistd.h>

#include "olrbench/report.hpp"

namespace olrbench {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& what)
{
    throw ValidationError(Stage::config, "run config: " + what);
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<std::string_view> allowed)
{
    if (!obj.is_object())
        config_error(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (!key.empty() && key.front() == '_')
            continue;  // comment keys
        bool ok = false;
        for (auto a : allowed)
            ok = ok || key == a;
        if (!ok)
            config_error("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback, const std::string& where)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return fallback;
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        config_error(where + "." + key + " has the wrong type");
    }
}

SyntheticSpec parse_synthetic(const Json& obj, const std::string& where, SyntheticSpec spec)
{
    check_keys(obj, where, {"preset", "data_points", "dimensions", "noise", "seed", "coef_range"});
    if (obj.contains("preset"))
        spec = synthetic_preset(obj.at("preset").get<std::string>());
    spec.n_points = get_or<Index>(obj, "data_points", spec.n_points, where);
    spec.n_dims = get_or<Index>(obj, "dimensions", spec.n_dims, where);
    spec.noise_sigma = get_or<double>(obj, "noise", spec.noise_sigma, where);
    spec.seed = get_or<std::uint64_t>(obj, "seed", spec.seed, where);
    if (obj.contains("coef_range")) {
        const auto& range = obj.at("coef_range");
        if (!range.is_array() || range.size() != 2)
            config_error(where + ".coef_range must be [min, max]");
        spec.coef_min = range[0].get<double>();
        spec.coef_max = range[1].get<double>();
    }
    return spec;
}

void apply_learner_fields(const Json& obj, LearnerConfig& c, const std::string& where)
{
    c.eta = get_or<double>(obj, "eta", c.eta, where);
    c.lambda = get_or<double>(obj, "lambda", c.lambda, where);
    c.delta = get_or<double>(obj, "delta", c.delta, where);
    c.C = get_or<double>(obj, "C", c.C, where);
    c.epsilon = get_or<double>(obj, "epsilon", c.epsilon, where);
    c.epochs = get_or<int>(obj, "epochs", c.epochs, where);
    c.w_base = get_or<double>(obj, "w_base", c.w_base, where);
    c.w_inc = get_or<double>(obj, "w_inc", c.w_inc, where);
}

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

RunConfig parse_run_config(const Json& doc, const fs::path& base_dir)
{
    check_keys(doc, "config", {"protocol", "stats", "datasets", "learners", "output", "workers"});
    RunConfig config;
    config.echo = doc;

    if (doc.contains("protocol")) {
        const auto& p = doc.at("protocol");
        check_keys(p, "protocol", {"folds", "first_batches", "seeds", "scaling"});
        config.protocol.folds = get_or<Index>(p, "folds", 5, "protocol");
        config.protocol.first_batches = get_or<Index>(p, "first_batches", 10, "protocol");
        config.protocol.seeds = get_or<std::vector<std::uint64_t>>(p, "seeds", config.protocol.seeds, "protocol");
        config.scaling = parse_scale_policy(get_or<std::string>(p, "scaling", "none", "protocol"));
    }
    if (doc.contains("stats")) {
        const auto& s = doc.at("stats");
        check_keys(s, "stats", {"alphas", "critical_mode", "lower_is_better"});
        config.stats.alphas = get_or<std::vector<double>>(s, "alphas", config.stats.alphas, "stats");
        config.stats.critical_mode = parse_critical_mode(get_or<std::string>(s, "critical_mode", "exact", "stats"));
        config.stats.lower_is_better = get_or<bool>(s, "lower_is_better", true, "stats");
    }

    if (!doc.contains("datasets") || !doc.at("datasets").is_array())
        config_error("'datasets' must be an array");
    for (const auto& entry : doc.at("datasets")) {
        const std::string where = "datasets[" + std::to_string(config.datasets.size()) + "]";
        check_keys(entry, where, {"name", "batch_size", "scaling", "preset", "synthetic", "csv"});
        DatasetSpec spec;
        spec.name = get_or<std::string>(entry, "name", "", where);
        if (spec.name.empty())
            config_error(where + " needs a name");
        spec.batch_size = get_or<Index>(entry, "batch_size", 0, where);
        if (entry.contains("scaling"))
            spec.scaling = parse_scale_policy(entry.at("scaling").get<std::string>());
        const int sources = int(entry.contains("preset")) + int(entry.contains("synthetic")) + int(entry.contains("csv"));
        if (sources != 1)
            config_error(where + " needs exactly one of 'preset', 'synthetic', 'csv'");
        if (entry.contains("preset")) {
            spec.source = synthetic_preset(entry.at("preset").get<std::string>());
        } else if (entry.contains("synthetic")) {
            spec.source = parse_synthetic(entry.at("synthetic"), where + ".synthetic", SyntheticSpec{});
        } else {
            const auto& csv = entry.at("csv");
            check_keys(csv, where + ".csv", {"path", "target"});
            CsvSource src;
            fs::path p = get_or<std::string>(csv, "path", "", where + ".csv");
            if (p.empty())
                config_error(where + ".csv needs a path");
            src.path = (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
            src.target = get_or<std::string>(csv, "target", "", where + ".csv");
            spec.source = src;
        }
        config.datasets.push_back(std::move(spec));
    }

    if (!doc.contains("learners") || !doc.at("learners").is_array())
        config_error("'learners' must be an array");
    for (const auto& entry : doc.at("learners")) {
        const std::string where = "learners[" + std::to_string(config.learners.size()) + "]";
        check_keys(entry, where,
                   {"name", "algorithm", "eta", "lambda", "delta", "C", "epsilon", "epochs", "w_base", "w_inc",
                    "overrides"});
        if (!entry.contains("algorithm"))
            config_error(where + " needs an algorithm");
        const Algorithm algorithm = parse_algorithm(entry.at("algorithm").get<std::string>());
        LearnerPlan plan;
        plan.name = get_or<std::string>(entry, "name", std::string(to_string(algorithm)), where);
        plan.config = LearnerConfig::defaults(algorithm);
        apply_learner_fields(entry, plan.config, where);
        if (entry.contains("overrides")) {
            const auto& overrides = entry.at("overrides");
            if (!overrides.is_object())
                config_error(where + ".overrides must be an object keyed by dataset name");
            for (const auto& [dataset, fields] : overrides.items()) {
                const std::string owhere = where + ".overrides." + dataset;
                check_keys(fields, owhere, {"eta", "lambda", "delta", "C", "epsilon", "epochs", "w_base", "w_inc"});
                LearnerConfig c = plan.config;
                apply_learner_fields(fields, c, owhere);
                plan.overrides[dataset] = c;
            }
        }
        config.learners.push_back(std::move(plan));
    }

    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        check_keys(o, "output", {"archive", "report", "scores", "traces", "diagram"});
        auto resolve = [&](const char* key) {
            const auto s = get_or<std::string>(o, key, "", "output");
            if (s.empty())
                return s;
            fs::path p = s;
            return (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
        };
        config.output = {resolve("archive"), resolve("report"), resolve("scores"), resolve("traces"),
                         resolve("diagram")};
    }
    config.workers = get_or<unsigned>(doc, "workers", 1u, "config");
    return config;
}

RunConfig load_run_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError(Stage::config, "cannot open run config '" + path.string() + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError(Stage::config, "run config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto config = parse_run_config(doc, path.parent_path());
    return config;
}

void RunConfig::validate() const
{
    if (learners.size() < 2)
        config_error("at least two learners are required");
    if (datasets.empty())
        config_error("at least one dataset is required");
    if (protocol.folds < 2)
        config_error("protocol.folds must be >= 2");
    if (protocol.first_batches < 1)
        config_error("protocol.first_batches must be >= 1");
    if (protocol.seeds.empty())
        config_error("protocol.seeds must not be empty");
    if (stats.alphas.empty())
        config_error("stats.alphas must not be empty");
    for (double a : stats.alphas)
        if (!(a > 0.0 && a < 1.0))
            config_error("stats.alphas entries must lie in (0, 1)");

    std::set<std::string> dataset_names;
    for (const auto& ds : datasets) {
        if (!dataset_names.insert(ds.name).second)
            config_error("duplicate dataset name '" + ds.name + "'");
        if (ds.batch_size < 1)
            config_error("dataset '" + ds.name + "' needs batch_size >= 1");
        if (const auto* synth = std::get_if<SyntheticSpec>(&ds.source)) {
            synth->validate(protocol.folds);
        } else {
            const auto& csv = std::get<CsvSource>(ds.source);
            if (!fs::exists(csv.path))
                config_error("dataset '" + ds.name + "': file '" + csv.path + "' does not exist");
        }
    }
    std::set<std::string> learner_names;
    for (const auto& l : learners) {
        if (!learner_names.insert(l.name).second)
            config_error("duplicate learner name '" + l.name + "'");
        l.config.validate();
        for (const auto& [dataset, c] : l.overrides) {
            if (!dataset_names.count(dataset))
                config_error("learner '" + l.name + "' overrides unknown dataset '" + dataset + "'");
            c.validate();
        }
    }
}

RunPlan make_run_plan(const RunConfig& config)
{
    config.validate();
    RunPlan plan;
    plan.protocol = config.protocol;
    plan.learners = config.learners;
    for (const auto& ds : config.datasets) {
        DatasetPlan dp;
        if (const auto* synth = std::get_if<SyntheticSpec>(&ds.source)) {
            dp.data = generate_synthetic(*synth, ds.name);
        } else {
            const auto& csv = std::get<CsvSource>(ds.source);
            dp.data = load_csv(csv.path, CsvSchema{csv.target});
            dp.data.name = ds.name;
        }
        dp.batch_size = ds.batch_size;
        dp.scaling = ds.scaling.value_or(config.scaling);
        plan.datasets.push_back(std::move(dp));
    }
    return plan;
}

ResultsArchive run_experiment(const RunConfig& config, unsigned workers)
{
    ResultsArchive archive;
    archive.tool_version = std::string(kToolVersion);
    archive.started_at = utc_now();
    archive.config = config.echo;
    archive.stats_options = config.stats;

    const RunPlan plan = make_run_plan(config);
    EvaluationResult eval = build_score_matrix(plan, workers == 0 ? config.workers : workers);
    archive.warnings = eval.warnings;
    archive.traces = std::move(eval.traces);
    archive.matrix = std::move(eval.matrix);
    try {
        archive.analysis = analyze(archive.matrix, config.stats);
    } catch (...) {
        if (!config.output.traces.empty()) {
            std::ostringstream out;
            write_traces_csv(archive.traces, out);
            write_text_atomic(config.output.traces, out.str());
        }
        throw;
    }
    archive.warnings.insert(archive.warnings.end(), archive.analysis.warnings.begin(), archive.analysis.warnings.end());
    archive.finished_at = utc_now();
    return archive;
}

// --- JSON ---------------------------------------------------------------

namespace {

Json number(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

double number_or(const Json& j, double fallback)
{
    return j.is_null() ? fallback : j.get<double>();
}

Json matrix_json(const MatrixXd& m)
{
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j)
            row.push_back(number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd matrix_from_json(const Json& rows, double null_value = std::numeric_limits<double>::quiet_NaN())
{
    const auto r = static_cast<Index>(rows.size());
    const auto c = r == 0 ? Index{0} : static_cast<Index>(rows[0].size());
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i) {
        if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != c)
            throw IntegrityError("ragged matrix in archive");
        for (Index j = 0; j < c; ++j)
            m(i, j) = number_or(rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], null_value);
    }
    return m;
}

Json bool_matrix_json(const BoolMatrix& m)
{
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j)
            row.push_back(bool(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

BoolMatrix bool_matrix_from_json(const Json& rows)
{
    const auto r = static_cast<Index>(rows.size());
    const auto c = r == 0 ? Index{0} : static_cast<Index>(rows[0].size());
    BoolMatrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<bool>();
    return m;
}

Json vector_json(const VectorXd& v)
{
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i)
        out.push_back(number(v(i)));
    return out;
}

VectorXd vector_from_json(const Json& arr)
{
    VectorXd v(static_cast<Index>(arr.size()));
    for (Index i = 0; i < v.size(); ++i)
        v(i) = number_or(arr[static_cast<std::size_t>(i)], std::numeric_limits<double>::quiet_NaN());
    return v;
}

Json stats_options_json(const StatsOptions& o)
{
    return {{"alphas", o.alphas}, {"critical_mode", to_string(o.critical_mode)}, {"lower_is_better", o.lower_is_better}};
}

StatsOptions stats_options_from_json(const Json& j)
{
    StatsOptions o;
    o.alphas = j.at("alphas").get<std::vector<double>>();
    o.critical_mode = parse_critical_mode(j.at("critical_mode").get<std::string>());
    o.lower_is_better = j.at("lower_is_better").get<bool>();
    return o;
}

Json trace_json(const MseTrace& t)
{
    return {{"learner", t.learner}, {"dataset", t.dataset}, {"fold", t.fold},         {"seed", t.seed},
            {"values", t.values},   {"diverged", t.diverged}, {"diverged_at", t.diverged_at}, {"message", t.message}};
}

MseTrace trace_from_json(const Json& j)
{
    MseTrace t;
    t.learner = j.at("learner").get<std::string>();
    t.dataset = j.at("dataset").get<std::string>();
    t.fold = j.at("fold").get<Index>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.values = j.at("values").get<std::vector<double>>();
    t.diverged = j.at("diverged").get<bool>();
    t.diverged_at = j.at("diverged_at").get<Index>();
    t.message = j.at("message").get<std::string>();
    return t;
}

SignificanceAnalysis analysis_from_json(const Json& j)
{
    SignificanceAnalysis a;
    a.models = j.at("models").get<std::vector<std::string>>();
    a.datasets = j.at("datasets").get<std::vector<std::string>>();
    a.excluded_datasets = j.at("excluded_datasets").get<std::vector<std::string>>();
    a.scores = matrix_from_json(j.at("scores"));
    a.ranks.ranks = matrix_from_json(j.at("ranks"));
    a.ranks.average_ranks = vector_from_json(j.at("average_ranks"));
    for (const auto& f : j.at("friedman")) {
        FriedmanResult r;
        r.chi2 = f.at("chi2").get<double>();
        r.degenerate = f.at("degenerate").get<bool>();
        r.ff = number_or(f.at("ff"), r.degenerate ? std::numeric_limits<double>::infinity()
                                                  : std::numeric_limits<double>::quiet_NaN());
        r.df1 = f.at("df1").get<int>();
        r.df2 = f.at("df2").get<int>();
        r.alpha = f.at("alpha").get<double>();
        r.critical_value = number_or(f.at("critical_value"), std::numeric_limits<double>::quiet_NaN());
        r.critical_mode = parse_critical_mode(f.at("critical_mode").get<std::string>());
        r.reject = f.at("reject").get<bool>();
        a.friedman.push_back(r);
    }
    const auto& n = j.at("nemenyi");
    a.nemenyi.alphas = n.at("alphas").get<std::vector<double>>();
    a.nemenyi.q = n.at("q").get<std::vector<double>>();
    a.nemenyi.cd = n.at("cd").get<std::vector<double>>();
    a.nemenyi.diffs = matrix_from_json(n.at("diffs"));
    for (const auto& s : n.at("significant"))
        a.nemenyi.significant.push_back(bool_matrix_from_json(s));
    a.warnings = j.at("warnings").get<std::vector<std::string>>();
    return a;
}

} // namespace

Json to_json(const ScoreMatrix& m)
{
    BoolMatrix diverged = m.diverged.size() == m.scores.size() ? m.diverged
                                                               : BoolMatrix::Constant(m.scores.rows(), m.scores.cols(), false);
    return {{"models", m.models},
            {"datasets", m.datasets},
            {"scores", matrix_json(m.scores)},
            {"diverged", bool_matrix_json(diverged)},
            {"first_batches", m.first_batches},
            {"folds", m.folds},
            {"seeds", m.seeds}};
}

ScoreMatrix score_matrix_from_json(const Json& j)
{
    ScoreMatrix m;
    m.models = j.at("models").get<std::vector<std::string>>();
    m.datasets = j.at("datasets").get<std::vector<std::string>>();
    m.scores = matrix_from_json(j.at("scores"));
    if (m.scores.size() == 0)
        m.scores.resize(static_cast<Index>(m.models.size()), static_cast<Index>(m.datasets.size()));
    m.diverged = bool_matrix_from_json(j.at("diverged"));
    m.first_batches = j.at("first_batches").get<Index>();
    m.folds = j.at("folds").get<Index>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (m.scores.rows() != static_cast<Index>(m.models.size()) ||
        m.scores.cols() != static_cast<Index>(m.datasets.size()))
        throw IntegrityError("score matrix shape does not match its model/dataset labels");
    return m;
}

Json to_json(const SignificanceAnalysis& a)
{
    Json friedman = Json::array();
    for (const auto& r : a.friedman)
        friedman.push_back({{"chi2", r.chi2},
                            {"ff", number(r.ff)},
                            {"df1", r.df1},
                            {"df2", r.df2},
                            {"alpha", r.alpha},
                            {"critical_value", number(r.critical_value)},
                            {"critical_mode", to_string(r.critical_mode)},
                            {"reject", r.reject},
                            {"degenerate", r.degenerate}});
    Json significant = Json::array();
    for (const auto& s : a.nemenyi.significant)
        significant.push_back(bool_matrix_json(s));
    return {{"models", a.models},
            {"datasets", a.datasets},
            {"excluded_datasets", a.excluded_datasets},
            {"scores", matrix_json(a.scores)},
            {"ranks", matrix_json(a.ranks.ranks)},
            {"average_ranks", vector_json(a.ranks.average_ranks)},
            {"friedman", friedman},
            {"nemenyi",
             {{"alphas", a.nemenyi.alphas},
              {"q", a.nemenyi.q},
              {"cd", a.nemenyi.cd},
              {"diffs", matrix_json(a.nemenyi.diffs)},
              {"significant", significant}}},
            {"warnings", a.warnings}};
}

Json to_json(const ResultsArchive& archive)
{
    Json traces = Json::array();
    for (const auto& t : archive.traces)
        traces.push_back(trace_json(t));
    return {{"tool", {{"name", "olrbench"}, {"version", archive.tool_version}}},
            {"started_at", archive.started_at},
            {"finished_at", archive.finished_at},
            {"config", archive.config},
            {"stats_options", stats_options_json(archive.stats_options)},
            {"score_matrix", to_json(archive.matrix)},
            {"analysis", to_json(archive.analysis)},
            {"traces", traces},
            {"warnings", archive.warnings}};
}

ResultsArchive archive_from_json(const Json& doc)
{
    try {
        ResultsArchive a;
        a.tool_version = doc.at("tool").at("version").get<std::string>();
        a.started_at = doc.at("started_at").get<std::string>();
        a.finished_at = doc.at("finished_at").get<std::string>();
        a.config = doc.at("config");
        a.stats_options = stats_options_from_json(doc.at("stats_options"));
        a.matrix = score_matrix_from_json(doc.at("score_matrix"));
        a.analysis = analysis_from_json(doc.at("analysis"));
        for (const auto& t : doc.at("traces"))
            a.traces.push_back(trace_from_json(t));
        a.warnings = doc.at("warnings").get<std::vector<std::string>>();
        return a;
    } catch (const Json::exception& e) {
        throw ValidationError(Stage::report, std::string("results archive does not match the schema: ") + e.what());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text)
{
    std::error_code ec;
    if (path.has_parent_path())
        fs::create_directories(path.parent_path(), ec);
    if (ec)
        throw Error(Stage::report, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(Stage::report, "cannot open '" + tmp.string() + "' for writing");
        out << text;
        out.flush();
        if (!out)
            throw Error(Stage::report, "write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(Stage::report, "cannot move output into place at '" + path.string() + "'");
    }
}

void write_archive(const ResultsArchive& archive, const fs::path& path)
{
    write_text_atomic(path, to_json(archive).dump(2) + "\n");
}

ResultsArchive read_archive(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError(Stage::report, "cannot open results archive '" + path.string() + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError(Stage::report, "results archive '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return archive_from_json(doc);
}

void verify_archive(const ResultsArchive& archive)
{
    SignificanceAnalysis recomputed;
    try {
        recomputed = analyze(archive.matrix, archive.stats_options);
    } catch (const Error& e) {
        throw IntegrityError(std::string("statistics cannot be recomputed from the stored score matrix: ") + e.what());
    }
    if (to_json(recomputed) != to_json(archive.analysis))
        throw IntegrityError("stored statistics differ from those recomputed from the score matrix");
}

} // namespace olrbench
