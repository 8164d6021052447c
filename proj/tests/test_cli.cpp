#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

// End-to-end checks against the installed binary; NSPANEL_CLI_PATH is baked
// in by the build.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("nspanel_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    static int& counter() {
        static int value = 0;
        return value;
    }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Runs the CLI with the given argument string, capturing exit code and the
/// two output streams.
RunResult run_cli(const TempDir& dir, const std::string& args,
                  const std::string& env_prefix = "") {
    const std::string out_path = dir.file("stdout.txt");
    const std::string err_path = dir.file("stderr.txt");
    const std::string command = env_prefix + std::string(NSPANEL_CLI_PATH) + " " + args +
                                " >" + out_path + " 2>" + err_path;
    const int status = std::system(command.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    return result;
}

}  // namespace

TEST_CASE("help exits 0") {
    TempDir dir;
    CHECK(run_cli(dir, "--help").exit_code == 0);
    CHECK(run_cli(dir, "generate --help").exit_code == 0);
    const RunResult help = run_cli(dir, "experiment --help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("randomwalk") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    TempDir dir;
    CHECK(run_cli(dir, "").exit_code == 2);
    CHECK(run_cli(dir, "frobnicate").exit_code == 2);
    CHECK(run_cli(dir, "generate --n 10").exit_code == 2);  // missing -o
    CHECK(run_cli(dir, "generate --n 10 --m abc -o x.csv").exit_code == 2);
    CHECK(run_cli(dir, "estimate -i nope.csv --method wild").exit_code == 2);

    const RunResult bad_m =
        run_cli(dir, "generate --m 1 --n 10 -o " + dir.file("x.csv"));
    CHECK(bad_m.exit_code == 2);
    CHECK(bad_m.err.find("m must be >= 2") != std::string::npos);

    const RunResult bad_scheme = run_cli(
        dir, "generate --n 10 --scheme linear:1 -o " + dir.file("x.csv"));
    CHECK(bad_scheme.exit_code == 2);
}

TEST_CASE("generate writes deterministic panel files") {
    TempDir dir;
    const std::string flags = "generate --m 2 --n 100 --sigma2 1 --scheme linear:0,1 --seed 42";
    const RunResult first = run_cli(dir, flags + " -o " + dir.file("a.csv"));
    REQUIRE(first.exit_code == 0);
    CHECK(first.out.find("wrote") != std::string::npos);
    REQUIRE(fs::exists(dir.file("a.csv")));
    REQUIRE(fs::exists(dir.file("a.json")));

    const RunResult second = run_cli(dir, flags + " -o " + dir.file("b.csv"));
    REQUIRE(second.exit_code == 0);
    CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
    CHECK(slurp(dir.file("a.json")) == slurp(dir.file("b.json")));

    const json sidecar = json::parse(slurp(dir.file("a.json")));
    CHECK(sidecar.at("spec").at("m") == 2);
    CHECK(sidecar.at("spec").at("n") == 100);
    CHECK(sidecar.at("seed") == 42);
}

TEST_CASE("NSPANEL_OUT_DIR redirects relative outputs") {
    TempDir dir;
    const fs::path sub = dir.path / "redirected";
    fs::create_directories(sub);
    const RunResult run =
        run_cli(dir, "generate --n 5 --seed 1 -o inner.csv",
                "NSPANEL_OUT_DIR=" + sub.string() + " ");
    REQUIRE(run.exit_code == 0);
    CHECK(fs::exists(sub / "inner.csv"));
    CHECK(fs::exists(sub / "inner.json"));
}

TEST_CASE("estimate methods agree and report diagnostics") {
    TempDir dir;
    REQUIRE(run_cli(dir, "generate --m 2 --n 60 --sigma2 2 --seed 7 -o " +
                             dir.file("panel.csv"))
                .exit_code == 0);

    const RunResult closed =
        run_cli(dir, "estimate -i " + dir.file("panel.csv") + " --method closed");
    REQUIRE(closed.exit_code == 0);
    const json closed_report = json::parse(closed.out);
    CHECK(closed_report.at("method") == "closed");
    CHECK(closed_report.at("estimate").at("mu_hat").size() == 60);
    CHECK(closed_report.at("second_order").at("is_maximum") == true);
    CHECK(closed_report.at("diagnostic").at("warning") == true);
    CHECK(closed_report.at("diagnostic").at("parameter_count") == 61);

    const RunResult newton =
        run_cli(dir, "estimate -i " + dir.file("panel.csv") + " --method newton");
    REQUIRE(newton.exit_code == 0);
    const json newton_report = json::parse(newton.out);
    CHECK(newton_report.at("newton").at("converged") == true);
    CHECK(newton_report.at("newton").at("sup_diff_vs_closed").get<double>() <= 1e-8);
    const double closed_s2 = closed_report.at("estimate").at("sigma2_hat").get<double>();
    const double newton_s2 = newton_report.at("estimate").at("sigma2_hat").get<double>();
    CHECK(std::abs(closed_s2 - newton_s2) <= 1e-8);

    const RunResult recast =
        run_cli(dir, "estimate -i " + dir.file("panel.csv") + " --method recast");
    REQUIRE(recast.exit_code == 0);
    const json recast_report = json::parse(recast.out);
    CHECK(recast_report.at("identity_vs_naive").at("passed") == true);
    CHECK(recast_report.at("estimate").at("n_eff") == 60);
    const double recast_s2 = recast_report.at("estimate").at("sigma2_hat").get<double>();
    CHECK(recast_s2 == doctest::Approx(2.0 * closed_s2).epsilon(1e-12));
}

TEST_CASE("estimate failures use exit 1 with context") {
    TempDir dir;
    CHECK(run_cli(dir, "estimate -i " + dir.file("absent.csv")).exit_code == 1);

    std::ofstream bad(dir.file("bad.csv"));
    bad << "group,replicate,value\n1,1,0.5\n1,2,oops\n";
    bad.close();
    const RunResult run = run_cli(dir, "estimate -i " + dir.file("bad.csv"));
    CHECK(run.exit_code == 1);
    CHECK(run.err.find(":3") != std::string::npos);
}

TEST_CASE("experiment runs are reproducible across worker counts") {
    TempDir dir;
    const std::string flags =
        "experiment --kind bias --n-grid 10,25 -R 60 --master-seed 5 --sigma2 1";
    const RunResult serial =
        run_cli(dir, flags + " --workers 1 -o " + dir.file("w1.csv"));
    REQUIRE(serial.exit_code == 0);
    CHECK(serial.out.find("PASS") != std::string::npos);
    const RunResult threaded =
        run_cli(dir, flags + " --workers 4 -o " + dir.file("w4.csv"));
    REQUIRE(threaded.exit_code == 0);

    const std::string a = slurp(dir.file("w1.csv"));
    CHECK(!a.empty());
    CHECK(a == slurp(dir.file("w4.csv")));
    // The run manifest records the config and master seed.
    const json manifest = json::parse(slurp(dir.file("w1.config.json")));
    CHECK(manifest.at("config").at("master_seed") == 5);
    CHECK(manifest.at("kind") == "bias");
}

TEST_CASE("experiment config file with flag overrides") {
    TempDir dir;
    std::ofstream config(dir.file("config.json"));
    config << R"({"version": 1, "sigma2": 1.0, "m": 2, "n_grid": [10],
                  "replications": 40, "master_seed": 11, "kind": "bias"})";
    config.close();

    const RunResult run = run_cli(dir, "experiment --config " + dir.file("config.json") +
                                           " --master-seed 99 --format json -o " +
                                           dir.file("report.json"));
    REQUIRE(run.exit_code == 0);
    const json report = json::parse(slurp(dir.file("report.json")));
    CHECK(report.at("config").at("master_seed") == 99);  // flag beats file
    CHECK(report.at("config").at("replications") == 40);
    CHECK(report.at("summaries").size() == 3);
}

TEST_CASE("experiment config errors exit 2") {
    TempDir dir;
    std::ofstream empty_grid(dir.file("empty.json"));
    empty_grid << R"({"n_grid": []})";
    empty_grid.close();
    CHECK(run_cli(dir, "experiment --config " + dir.file("empty.json") + " -o " +
                           dir.file("x.csv"))
              .exit_code == 2);

    std::ofstream unknown(dir.file("unknown.json"));
    unknown << R"({"n_grid": [10], "turbo": true})";
    unknown.close();
    CHECK(run_cli(dir, "experiment --config " + dir.file("unknown.json") + " -o " +
                           dir.file("x.csv"))
              .exit_code == 2);

    CHECK(run_cli(dir, "experiment -o " + dir.file("x.csv")).exit_code == 2);
    CHECK(run_cli(dir, "experiment --n-grid 10 --workers 0 -o " + dir.file("x.csv"))
              .exit_code == 2);
}

TEST_CASE("experiment path kind writes the running estimates") {
    TempDir dir;
    const RunResult run = run_cli(
        dir, "experiment --kind path --n-max 2000 --checkpoints 40 --master-seed 3 -o " +
                 dir.file("path.csv"));
    REQUIRE(run.exit_code == 0);
    CHECK(run.out.find("path final recast") != std::string::npos);
    const std::string text = slurp(dir.file("path.csv"));
    CHECK(text.rfind("n,naive,recast\n", 0) == 0);
    CHECK(text.find("\n2000,") != std::string::npos);
}
