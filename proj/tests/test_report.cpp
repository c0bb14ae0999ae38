#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "olrbench/report.hpp"
#include "reference_grid.hpp"

using namespace olrbench;
namespace fs = std::filesystem;

namespace {

std::size_t count_of(const std::string& text, const std::string& needle)
{
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size()))
        ++n;
    return n;
}

std::vector<std::string> connectors(const std::string& svg)
{
    std::vector<std::string> out;
    const std::regex re("class=\"cd-group\" data-members=\"([^\"]*)\"");
    for (std::sregex_iterator it(svg.begin(), svg.end(), re), end; it != end; ++it)
        out.push_back((*it)[1]);
    return out;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        out.push_back(item);
    return out;
}

bool same_group(const std::string& svg, const std::string& a, const std::string& b)
{
    for (const auto& c : connectors(svg)) {
        const auto members = split(c, '|');
        if (std::find(members.begin(), members.end(), a) != members.end() &&
            std::find(members.begin(), members.end(), b) != members.end())
            return true;
    }
    return false;
}

fs::path scratch_dir(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("olrbench_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ResultsArchive reference_archive()
{
    ResultsArchive a;
    a.tool_version = std::string(kToolVersion);
    a.started_at = "2026-01-01T00:00:00Z";
    a.finished_at = "2026-01-01T00:01:00Z";
    a.config = Json::object();
    a.matrix = test::reference_matrix();
    a.analysis = analyze(a.matrix, a.stats_options);
    MseTrace t;
    t.learner = "SGD", t.dataset = "DS1", t.values = {1.5, 1.25};
    a.traces.push_back(t);
    return a;
}

} // namespace

TEST_SUITE("report") {

TEST_CASE("report on the reference grid")
{
    const auto text = render_analysis(analyze(test::reference_matrix()));
    CHECK(text.find("χ²_F = 29.2083") != std::string::npos);
    CHECK(text.find("F_F (Iman-Davenport) = 7.6") != std::string::npos);
    CHECK(text.find("reject the null hypothesis with 95% confidence") != std::string::npos);
    CHECK(text.find("reject the null hypothesis with 90% confidence") != std::string::npos);
    CHECK(text.find("CD = 3.7122") != std::string::npos);
    CHECK(text.find("CD = 3.4048") != std::string::npos);
    CHECK(count_of(text, " vs ") == 28);
    CHECK(text.find("- SGD vs OLR-WA: |ΔR| = 3.875; significant at α = 0.05") != std::string::npos);
    CHECK(text.find("- RLS vs OLR-WA: |ΔR| = 3.625; significant at α = 0.1 (CD 3.405), OLR-WA ranks better; "
                    "not significant at α = 0.05") != std::string::npos);
    CHECK(text.find("| **Average rank** | 5.125 | 7.625 | 4.375 | 5.000 | 3.875 | 4.875 | 3.875 | 1.250 |") !=
          std::string::npos);
}

TEST_CASE("all-tied scores retain the null hypothesis")
{
    ScoreMatrix m;
    m.models = {"A", "B", "C", "D"};
    m.datasets = {"1", "2", "3", "4", "5", "6"};
    m.scores = MatrixXd::Constant(4, 6, 0.5);
    const auto text = render_analysis(analyze(m));
    CHECK(text.find("χ²_F = 0.0000") != std::string::npos);
    CHECK(text.find("retain the null hypothesis") != std::string::npos);
    CHECK(text.find("reject") == std::string::npos);
    CHECK(count_of(text, " vs ") == 6);
    CHECK(count_of(text, "not significant at α = 0.05") == 6);
}

TEST_CASE("cd_groups")
{
    VectorXd r(2);
    r << 1.4, 1.6;
    const auto two = cd_groups(r, 0.5);
    REQUIRE(two.size() == 1);
    CHECK(two[0].members == std::vector<Index>{0, 1});
    CHECK(cd_groups(r, 0.1).empty());

    VectorXd tied = VectorXd::Constant(5, 3.0);
    const auto all = cd_groups(tied, 0.0);
    REQUIRE(all.size() == 1);
    CHECK(all[0].members.size() == 5);

    VectorXd chain(4);
    chain << 1, 2, 3, 4;
    const auto g = cd_groups(chain, 1.5);
    REQUIRE(g.size() == 3);
    CHECK(g[0].members == std::vector<Index>{0, 1});
    CHECK(g[1].members == std::vector<Index>{1, 2});
    CHECK(g[2].members == std::vector<Index>{2, 3});
}

TEST_CASE("cd_groups members are all within the CD")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(1.0, 8.0);
    for (int trial = 0; trial < 300; ++trial) {
        const Index k = 2 + Index(rng() % 10);
        VectorXd r(k);
        for (Index i = 0; i < k; ++i)
            r(i) = U(rng);
        const double cd = U(rng) - 1.0;
        for (const auto& g : cd_groups(r, cd)) {
            CHECK(g.members.size() >= 2);
            CHECK(g.high_rank - g.low_rank <= cd);
            // maximal: no outside model fits inside the span's reach
            for (Index i = 0; i < k; ++i) {
                if (std::find(g.members.begin(), g.members.end(), i) != g.members.end())
                    continue;
                const bool fits = r(i) >= g.low_rank && r(i) <= g.high_rank;
                CHECK_FALSE(fits);
            }
        }
    }
}

TEST_CASE("diagram of the reference grid")
{
    const auto a = analyze(test::reference_matrix());
    const auto svg = cd_diagram(a.ranks.average_ranks, a.nemenyi.cd[0], a.models, "test");
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("data-cd=\"3.7122") != std::string::npos);
    for (const auto& m : test::kRefModels)
        CHECK(svg.find("data-model=\"" + m + "\"") != std::string::npos);
    for (const char* other : {"SGD", "MBGD", "ORR"})
        CHECK_FALSE(same_group(svg, "OLR-WA", other));
    for (const char* other : {"LMS", "OLR", "PA", "RLS"})
        CHECK(same_group(svg, "OLR-WA", other));
    CHECK(count_of(svg, "class=\"marker\"") == 8);

    // markers run left to right in order of increasing average rank
    const std::regex re("data-rank=\"([0-9.]+)\" cx=\"([0-9.]+)\"");
    std::vector<std::pair<double, double>> pts;
    for (std::sregex_iterator it(svg.begin(), svg.end(), re), end; it != end; ++it)
        pts.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
    REQUIRE(pts.size() == 8);
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 1; i < pts.size(); ++i)
        CHECK(pts[i].second >= pts[i - 1].second);
}

TEST_CASE("diagram edge cases")
{
    VectorXd r(2);
    r << 1.25, 1.75;
    const auto svg = cd_diagram(r, 1.0, {"a", "b"});
    CHECK(connectors(svg) == std::vector<std::string>{"a|b"});
    const auto flat = cd_diagram(VectorXd::Constant(4, 2.5), 0.5, {"w", "x", "y", "z"});
    CHECK(connectors(flat).size() == 1);
    CHECK(cd_diagram(r, 1.0, {"a<b", "c"}).find("a&lt;b") != std::string::npos);
    CHECK_THROWS_AS(cd_diagram(VectorXd::Constant(1, 1.0), 1.0, {"a"}), ValidationError);
    CHECK_THROWS_AS(cd_diagram(r, 1.0, {"a"}), ValidationError);
}

TEST_CASE("archive JSON round trip")
{
    const auto archive = reference_archive();
    const Json doc = to_json(archive);
    CHECK(doc.at("tool").at("version") == kToolVersion);
    const auto back = archive_from_json(doc);
    CHECK(to_json(back) == doc);
    CHECK(back.matrix.scores == archive.matrix.scores);
    CHECK(back.traces.size() == 1);
    CHECK(back.traces[0].values == std::vector<double>{1.5, 1.25});
    CHECK_NOTHROW(verify_archive(back));

    const auto dir = scratch_dir("archive");
    write_archive(archive, dir / "a.json");
    const auto read = read_archive(dir / "a.json");
    CHECK(render_report(read) == render_report(archive));
    fs::remove_all(dir);
}

TEST_CASE("tampered archives are rejected")
{
    auto doc = to_json(reference_archive());
    doc["score_matrix"]["scores"][0][0] = 1.0;  // SGD becomes best on DS1
    const auto tampered = archive_from_json(doc);
    CHECK_THROWS_AS(verify_archive(tampered), IntegrityError);
    CHECK_THROWS_AS(render_report(tampered), IntegrityError);

    auto doc2 = to_json(reference_archive());
    doc2["analysis"]["friedman"][0]["reject"] = false;
    CHECK_THROWS_AS(verify_archive(archive_from_json(doc2)), IntegrityError);
}

TEST_CASE("degenerate statistics survive the archive")
{
    auto a = reference_archive();
    MatrixXd s(3, 4);
    s << 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3;
    a.matrix.models = {"A", "B", "C"};
    a.matrix.datasets = {"w", "x", "y", "z"};
    a.matrix.scores = s;
    a.matrix.diverged = BoolMatrix::Constant(3, 4, false);
    a.analysis = analyze(a.matrix, a.stats_options);
    CHECK(a.analysis.friedman[0].degenerate);
    const auto back = archive_from_json(to_json(a));
    CHECK(std::isinf(back.analysis.friedman[0].ff));
    CHECK_NOTHROW(verify_archive(back));
    CHECK(render_report(back).find("F_F (Iman-Davenport) = inf") != std::string::npos);
}

TEST_CASE("score CSV round trip")
{
    auto m = test::reference_matrix();
    m.diverged(2, 3) = true;
    m.scores(2, 3) = std::numeric_limits<double>::quiet_NaN();
    std::stringstream io;
    write_score_csv(m, io);
    const auto back = read_score_csv(io);
    CHECK(back.models == m.models);
    CHECK(back.datasets == m.datasets);
    CHECK(back.diverged == m.diverged);
    for (Index i = 0; i < 8; ++i)
        for (Index j = 0; j < 8; ++j)
            if (!m.diverged(i, j))
                CHECK(back.scores(i, j) == m.scores(i, j));
}

TEST_CASE("score CSV errors")
{
    std::istringstream empty("");
    CHECK_THROWS_AS(read_score_csv(empty), IngestionError);
    std::istringstream header_only("model,a,b\n");
    CHECK_THROWS_AS(read_score_csv(header_only), IngestionError);
    std::istringstream ragged("model,a,b\nx,1\n");
    CHECK_THROWS_AS(read_score_csv(ragged), IngestionError);
    std::istringstream bad("model,a\nx,abc\n");
    try {
        read_score_csv(bad, "s.csv");
        FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("s.csv:2 column 'a'") != std::string::npos);
    }
    std::istringstream blanks("model,a\n\nx,1\n\ny,2\n");
    CHECK(read_score_csv(blanks).scores.rows() == 2);
}

TEST_CASE("traces CSV")
{
    MseTrace t;
    t.learner = "PA", t.dataset = "D", t.seed = 3, t.fold = 1, t.values = {0.5, 0.25};
    MseTrace d = t;
    d.diverged = true, d.values = {0.5};
    std::ostringstream out;
    write_traces_csv({t, d}, out);
    const auto lines = split(out.str(), '\n');
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "learner,dataset,seed,fold,batch,mse,diverged");
    CHECK(lines[1] == "PA,D,3,1,1,0.5,0");
    CHECK(lines[2] == "PA,D,3,1,2,0.25,0");
    CHECK(lines[4] == "PA,D,3,1,0,,1");  // diverged_at defaults to -1
}

TEST_CASE("run config parsing")
{
    const auto dir = scratch_dir("config");
    const Json base = Json::parse(R"({
        "protocol": {"folds": 3, "first_batches": 4, "seeds": [7], "scaling": "zscore"},
        "datasets": [{"name": "S", "batch_size": 10,
                      "synthetic": {"data_points": 90, "dimensions": 2, "noise": 1.0, "seed": 3}}],
        "learners": [{"algorithm": "sgd", "eta": 0.001, "overrides": {"S": {"eta": 0.002}}},
                     {"algorithm": "olr-wa", "name": "WA"}],
        "output": {"report": "out/report.md"},
        "_note": "ignored"
    })");
    const auto c = parse_run_config(base, dir);
    CHECK(c.protocol.folds == 3);
    CHECK(c.protocol.seeds == std::vector<std::uint64_t>{7});
    CHECK(c.scaling == ScalePolicy::zscore);
    CHECK(c.learners[0].name == "SGD");
    CHECK(c.learners[0].config.eta == 0.001);
    CHECK(c.learners[0].config_for("S").eta == 0.002);
    CHECK(c.learners[1].name == "WA");
    CHECK(c.output.report == (dir / "out/report.md").lexically_normal().string());
    CHECK_NOTHROW(c.validate());

    auto bad = base;
    bad["protocool"] = Json::object();
    CHECK_THROWS_AS(parse_run_config(bad, dir), ValidationError);
    bad = base;
    bad["learners"][0]["algorithm"] = "adam";
    CHECK_THROWS_AS(parse_run_config(bad, dir), ValidationError);
    bad = base;
    bad["learners"].erase(1);
    CHECK_THROWS_AS(parse_run_config(bad, dir).validate(), ValidationError);
    bad = base;
    bad["learners"][0]["overrides"] = {{"T", {{"eta", 0.1}}}};
    CHECK_THROWS_AS(parse_run_config(bad, dir).validate(), ValidationError);
    bad = base;
    bad["datasets"][0] = {{"name", "F"}, {"batch_size", 5}, {"csv", {{"path", "missing.csv"}}}};
    CHECK_THROWS_AS(parse_run_config(bad, dir).validate(), ValidationError);
    bad = base;
    bad["datasets"][0]["preset"] = "ds1";
    CHECK_THROWS_AS(parse_run_config(bad, dir), ValidationError);
    bad = base;
    bad["learners"][1]["name"] = "SGD";
    CHECK_THROWS_AS(parse_run_config(bad, dir).validate(), ValidationError);

    {
        std::ofstream f(dir / "broken.json");
        f << "{ not json";
    }
    CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("end-to-end run on a small config")
{
    const Json doc = Json::parse(R"({
        "protocol": {"folds": 3, "first_batches": 3, "seeds": [0]},
        "datasets": [
            {"name": "A", "batch_size": 10, "synthetic": {"data_points": 120, "dimensions": 2, "seed": 1}},
            {"name": "B", "batch_size": 10, "synthetic": {"data_points": 150, "dimensions": 3, "seed": 2}}],
        "learners": [{"algorithm": "rls"}, {"algorithm": "olr-wa"}, {"algorithm": "pa"}]
    })");
    const auto archive = run_experiment(parse_run_config(doc));
    CHECK(archive.matrix.scores.rows() == 3);
    CHECK(archive.matrix.scores.cols() == 2);
    CHECK(archive.traces.size() == 3 * 2 * 3);
    CHECK_NOTHROW(verify_archive(archive));
    CHECK(render_report(archive).find("## Friedman test") != std::string::npos);
}

TEST_CASE("atomic text write")
{
    const auto dir = scratch_dir("atomic");
    write_text_atomic(dir / "f.txt", "one");
    write_text_atomic(dir / "f.txt", "two");
    std::ifstream in(dir / "f.txt");
    std::string s;
    std::getline(in, s);
    CHECK(s == "two");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir))
        ++files;
    CHECK(files == 1);  // no temporary left behind
    write_text_atomic(dir / "sub/dir/g.txt", "nested");
    CHECK(fs::exists(dir / "sub/dir/g.txt"));
    CHECK_THROWS_AS(write_text_atomic(dir / "f.txt" / "h.txt", "x"), Error);
    fs::remove_all(dir);
}

} // TEST_SUITE
