#include "twinsem/error.hpp"
#include "twinsem/run.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace twinsem;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Fresh scratch directory per call.
fs::path scratch(const std::string& tag) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / ("twinsem_test_run_" + tag + "_" + std::to_string(++counter));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string read(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t file_count(const fs::path& dir) {
    if (!fs::exists(dir)) return 0;
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

json ace_config() {
    return {{"name", "ht_ace"},
            {"design", "ace"},
            {"options", {{"phenotypes", {"ht"}}}},
            {"data", {{"MZ", "MZ.csv"}, {"DZ", "DZ.csv"}}},
            {"simulate",
             {{"n", 400},
              {"seed", 5},
              {"truth", {{"a_r1c1", 0.7}, {"c_r1c1", 0.5}, {"e_r1c1", 0.5}, {"mean_ht", 1.0}}}}}};
}

/// Writes the ACE config and simulates its data into `dir`.
fs::path ace_setup(const fs::path& dir) {
    const fs::path config = dir / "ace.json";
    write(config, ace_config().dump(2));
    std::ostringstream err;
    RunFlags flags;
    flags.out = dir;
    REQUIRE(run_simulate(config, flags, err) == kExitOk);
    return config;
}

}  // namespace

TEST_CASE("config schema errors name the field") {
    auto error_of = [](const json& doc) -> std::string {
        try {
            parse_config(doc);
        } catch (const DataError& e) {
            return e.what();
        }
        return "";
    };
    CHECK(error_of({{"name", "x"}}).find("design") != std::string::npos);
    CHECK(error_of({{"design", "spline"}}).find("unknown design") != std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"colour", 1}}).find("colour") != std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"fit", {{"max_iterations", "many"}}}}).find("fit.max_iterations") !=
          std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"fit", {{"speed", 1}}}}).find("fit.speed") != std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"bounds", {{"a", {1.0, 0.0}}}}}).find("bounds.a") != std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"prep", {{{"op", "scale"}, {"bogus", 1}}}}}).find("prep[0]") !=
          std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"data", 3}}).find("data") != std::string::npos);
    CHECK(error_of({{"design", "ace"}, {"equate", {"a"}}}).find("equate") != std::string::npos);

    const RunConfig ok = parse_config(ace_config(), "/base");
    CHECK(ok.name == "ht_ace");
    CHECK(ok.data.at("MZ") == fs::path("/base/MZ.csv"));
    CHECK(ok.simulate.n == 400);
    CHECK(ok.truth.at("mean_ht") == 1.0);
}

TEST_CASE("malformed JSON reports its line") {
    const fs::path dir = scratch("json");
    write(dir / "bad.json", "{\n  \"design\": \"ace\",\n  oops\n}");
    std::ostringstream err;
    RunFlags flags;
    flags.out = dir / "out";
    CHECK(run_fit(dir / "bad.json", flags, err) == kExitInputError);
    CHECK(err.str().find("line 3") != std::string::npos);
    CHECK(file_count(dir / "out") == 0);
}

TEST_CASE("missing CSV is an input error with no outputs") {
    const fs::path dir = scratch("missing");
    write(dir / "ace.json", ace_config().dump());
    std::ostringstream err;
    RunFlags flags;
    flags.out = dir / "out";
    flags.report = ReportFormat::json;
    CHECK(run_fit(dir / "ace.json", flags, err) == kExitInputError);
    CHECK(err.str().find(".csv' for group") != std::string::npos);
    CHECK(file_count(dir / "out") == 0);
}

TEST_CASE("simulate then fit: deterministic JSON, sorted estimates") {
    const fs::path dir = scratch("fit");
    const fs::path config = ace_setup(dir);
    CHECK(fs::exists(dir / "MZ.csv"));
    const json truth = json::parse(read(dir / "truth.json"));
    CHECK(truth.at("truth").at("a_r1c1") == 0.7);
    CHECK(truth.at("n").at("DZ") == 400);

    std::ostringstream err;
    RunFlags flags;
    flags.report = ReportFormat::json;
    flags.out = dir / "a";
    REQUIRE(run_fit(config, flags, err) == kExitOk);
    flags.out = dir / "b";
    REQUIRE(run_fit(config, flags, err) == kExitOk);
    const std::string first = read(dir / "a" / "report.json");
    CHECK(first == read(dir / "b" / "report.json"));
    CHECK(file_count(dir / "a") == 1);

    const json report = json::parse(first);
    CHECK(report.at("model") == "ht_ace");
    CHECK(report.at("status") == "converged");
    CHECK(report.at("fit").at("nfree") == 4);
    const auto& est = report.at("estimates");
    REQUIRE(est.size() == 4);
    for (std::size_t i = 1; i < est.size(); ++i) {
        const auto prev = std::make_pair(est[i - 1].at("matrix").get<std::string>(), est[i - 1].at("label").get<std::string>());
        const auto cur = std::make_pair(est[i].at("matrix").get<std::string>(), est[i].at("label").get<std::string>());
        CHECK(prev < cur);
    }
    CHECK(est[0].at("matrix") == "A");
    CHECK(est[3].at("label") == "mean_ht");
    CHECK(est[3].at("matrix") == "M");

    flags.out = dir / "tsv";
    flags.report = ReportFormat::tsv;
    REQUIRE(run_fit(config, flags, err) == kExitOk);
    for (const char* f : {"estimates.tsv", "fit.tsv", "diagnostics.tsv"}) CHECK(fs::exists(dir / "tsv" / f));
    CHECK(read(dir / "tsv" / "estimates.tsv").rfind("matrix\tlabel\testimate\tse\tat_bound\n", 0) == 0);
    flags.out = dir / "csv";
    flags.report = ReportFormat::csv;
    REQUIRE(run_fit(config, flags, err) == kExitOk);
    CHECK(fs::exists(dir / "csv" / "fit.csv"));
}

TEST_CASE("non-convergence exits 3 unless allowed") {
    const fs::path dir = scratch("nonconv");
    ace_setup(dir);
    json cfg = ace_config();
    cfg["fit"] = {{"max_iterations", 1}, {"multistart", 0}};
    write(dir / "short.json", cfg.dump());
    std::ostringstream err;
    RunFlags flags;
    flags.out = dir / "out";
    flags.report = ReportFormat::json;
    CHECK(run_fit(dir / "short.json", flags, err) == kExitNotConverged);
    CHECK(json::parse(read(dir / "out" / "report.json")).at("status") == "iteration-limit");
    flags.allow_nonconverged = true;
    CHECK(run_fit(dir / "short.json", flags, err) == kExitOk);
}

TEST_CASE("builder preconditions surface as input errors") {
    const fs::path dir = scratch("builder");
    json cfg = {{"design", "mrdoc2"},
                {"options", {{"phenotypes", {"X", "Y"}}, {"prs", {"P"}}}},
                {"simulate", {{"n", 10}}}};
    write(dir / "c.json", cfg.dump());
    std::ostringstream err;
    RunFlags flags;
    flags.out = dir / "out";
    CHECK(run_simulate(dir / "c.json", flags, err) == kExitInputError);
    CHECK(err.str().find("instrument") != std::string::npos);
    CHECK(file_count(dir / "out") == 0);
}

TEST_CASE("designs build from configs") {
    auto labels = [](const json& doc) { return free_labels(build_design(parse_config(doc), {})); };
    CHECK(labels({{"design", "clpm"}, {"options", {{"waves", 4}, {"x_base", "x"}, {"y_base", "y"}}}}).size() == 32);
    const auto ri = labels({{"design", "riclpm"}, {"options", {{"waves", 3}, {"x_base", "x"}, {"y_base", "y"}}}});
    CHECK(std::find(ri.begin(), ri.end(), "var_RIx") != ri.end());
    const auto mr = labels({{"design", "mrdoc"}, {"options", {{"phenotypes", {"BMI", "SBP"}}, {"prs", {"PRS_BMI"}}}}});
    CHECK(std::find(mr.begin(), mr.end(), "b2") != mr.end());
    const auto sl = labels({{"design", "sexlim"},
                            {"options", {{"phenotypes", {"tri", "bic", "caf"}}, {"a_or_c", "A"}, {"variant", "nonscalar"}}}});
    CHECK(std::find(sl.begin(), sl.end(), "ramf_1_2") != sl.end());
    const json ram = {{"design", "ram"},
                      {"manifests", {"y"}},
                      {"latents", json::array()},
                      {"paths",
                       {{{"from", "y"}, {"to", "y"}, {"arrows", 2}, {"free", true}, {"value", 1.0}, {"label", "vy"}},
                        {{"from", "one"}, {"to", "y"}, {"arrows", 1}, {"free", true}, {"value", 0.0}, {"label", "my"}}}},
                      {"fix", {{"my", 0.5}}}};
    CHECK(labels(ram) == std::vector<std::string>{"vy"});
    CHECK_THROWS_AS(build_design(parse_config({{"design", "sexlim"}, {"options", {{"phenotypes", {"v"}}, {"variant", "odd"}}}}), {}),
                    DataError);
}

TEST_CASE("parse-paths writes the exchange document") {
    const fs::path dir = scratch("paths");
    std::ostringstream out, err;
    CHECK(run_parse_paths(TWINSEM_TEST_DATA "/lgc_onyx.R", dir / "lgc.json", out, err) == kExitOk);
    const json doc = json::parse(read(dir / "lgc.json"));
    CHECK(doc.at("paths").size() == 23);
    CHECK(err.str().find("umxTwinMaker") != std::string::npos);
    CHECK(run_parse_paths(TWINSEM_TEST_DATA "/lgc_onyx.R", std::nullopt, out, err) == kExitOk);
    CHECK(json::parse(out.str()) == doc);
    CHECK(run_parse_paths(dir / "absent.R", std::nullopt, out, err) == kExitInputError);
    write(dir / "broken.R", "mxPath(from = \"a\", to = \"b\"");
    CHECK(run_parse_paths(dir / "broken.R", std::nullopt, out, err) == kExitInputError);
}

TEST_CASE("prep commands") {
    const fs::path dir = scratch("prep");
    write(dir / "twins.csv",
          "zyg,v_T1,v_T2,c_T1,c_T2\n"
          "MZ,1,1.2,0.5,\n"
          "MZ,2,2.1,0.1,0.2\n"
          "DZ,3,2.5,,0.3\n"
          "DZ,4,3.9,0.7,0.8\n");
    std::ostringstream err;
    PrepCommand cmd;
    cmd.input = dir / "twins.csv";
    cmd.output = dir / "placeholder.csv";
    cmd.step.op = "placeholder";
    cmd.step.covar = "c";
    cmd.step.pheno = "v";
    cmd.step.suffixes = {"_T1", "_T2"};
    REQUIRE(run_prep(cmd, err) == kExitOk);
    const ColumnTable placed = read_csv(dir / "placeholder.csv");
    CHECK(placed.continuous("c_T2")[0] == 99999.0);
    CHECK(std::isnan(placed.continuous("v_T2")[0]));

    cmd.output = dir / "scaled.csv";
    cmd.step = PrepStep{};
    cmd.step.op = "scale";
    cmd.step.vars = {"v"};
    REQUIRE(run_prep(cmd, err) == kExitOk);

    cmd.output = dir / "resid.csv";
    cmd.step.op = "residualize";
    cmd.step.formula = "v ~ c";
    cmd.step.suffixes = {"_T1", "_T2"};
    REQUIRE(run_prep(cmd, err) == kExitOk);
    CHECK(std::isnan(read_csv(dir / "resid.csv").continuous("v_T2")[0]));

    cmd.output = dir / "bc.csv";
    cmd.step = PrepStep{};
    cmd.step.op = "bin-cont";
    cmd.step.vars = {"v"};
    cmd.step.censp = 2.0;
    cmd.step.suffixes = {"_T1", "_T2"};
    REQUIRE(run_prep(cmd, err) == kExitOk);
    CHECK(read_csv(dir / "bc.csv").has("vbin_T1"));

    cmd.output = dir / "summary.csv";
    cmd.step = PrepStep{};
    cmd.step.op = "summarize";
    cmd.step.vars = {"v"};
    cmd.zygosity = "zyg";
    REQUIRE(run_prep(cmd, err) == kExitOk);
    const ColumnTable summary = read_csv(dir / "summary.csv");
    CHECK(summary.continuous("n_mz")[0] == 2.0);
    CHECK(summary.continuous("r_mz")[0] == doctest::Approx(1.0));

    cmd.input = dir / "none.csv";
    cmd.output = dir / "never.csv";
    CHECK(run_prep(cmd, err) == kExitInputError);
    CHECK_FALSE(fs::exists(dir / "never.csv"));
}

TEST_CASE("atomic writes leave no partial files") {
    const fs::path dir = scratch("atomic");
    write_files_atomically(dir, {{"a.txt", "alpha"}, {"b.txt", "beta"}});
    CHECK(read(dir / "a.txt") == "alpha");
    for (const auto& entry : fs::directory_iterator(dir)) CHECK(entry.path().filename().string()[0] != '.');
    CHECK(parse_report_format("json") == ReportFormat::json);
    CHECK_THROWS(parse_report_format("xml"));
}
