// Black-box tests of the command-line binary: every case runs the real
// executable in a scratch directory and inspects exit codes and output files.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunResult run_cli(const fs::path& dir, const std::string& args) {
    fs::create_directories(dir);
    std::string cmd = "cd " + dir.string() + " && " + OSCQ_BIN + " " + args +
                      " > cli_stdout.txt 2> cli_stderr.txt";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(dir / "cli_stdout.txt");
    r.err = slurp(dir / "cli_stderr.txt");
    return r;
}

fs::path scratch(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("oscq_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// header + rows of a comma-separated file
std::pair<std::vector<std::string>, std::vector<std::vector<std::string>>> read_csv(
    const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    REQUIRE(std::getline(f, line));
    auto header = split(line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(f, line))
        if (!line.empty()) rows.push_back(split(line));
    return {header, rows};
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find(" = ");
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

}  // namespace

TEST_CASE("limits subcommand prints closed forms") {
    auto dir = scratch("limits");
    auto r = run_cli(dir, "limits N=2 gamma=0.5 limit=g0");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "0.5625\n");
    r = run_cli(dir, "limits N=3 gamma=0.5 limit=tg");
    CHECK(r.exit_code == 0);
    CHECK(r.out == "3.09375\n");
    // same numbers through ordinary flags
    r = run_cli(dir, "limits --N 2 --gamma 0.5 --limit g0");
    CHECK(r.out == "0.5625\n");
}

TEST_CASE("validation failures exit with code 2") {
    auto dir = scratch("validation");
    CHECK(run_cli(dir, "limits N=9 gamma=0.5 limit=g0").exit_code == 2);
    CHECK(run_cli(dir, "limits N=2 gamma=9 limit=g0").exit_code == 2);
    CHECK(run_cli(dir, "limits N=2 gamma=0.5 limit=bogus").exit_code == 2);
    CHECK(run_cli(dir, "work --N 2 --mode nonsense").exit_code == 2);
    CHECK(run_cli(dir, "work --no-such-flag 3").exit_code == 2);
    CHECK(run_cli(dir, "avg --N 1 --e-cut 8").exit_code == 2);
    auto r = run_cli(dir, "work --N 2 --g -1");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("g must be") != std::string::npos);
}

TEST_CASE("completeness gate failures exit with code 3") {
    auto dir = scratch("gate");
    auto r = run_cli(dir, "quench --N 1 --g 0 --gamma 0.25 --e-cut 2.5");
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("completeness") != std::string::npos);
}

TEST_CASE("work run writes distribution, manifest and cache") {
    auto dir = scratch("work");
    auto r = run_cli(dir, "work --N 2 --g 5 --gamma 0.5 --e-cut 12 --out run");
    REQUIRE(r.exit_code == 0);
    auto [header, rows] = read_csv(dir / "run/work.csv");
    REQUIRE(header == std::vector<std::string>{"j", "E", "W", "weight"});
    REQUIRE(rows.size() > 20);
    double wsum = 0, mean = 0;
    for (const auto& row : rows) {
        wsum += std::stod(row[3]);
        mean += std::stod(row[3]) * std::stod(row[2]);
    }
    auto man = read_manifest(dir / "run/work_manifest.txt");
    CHECK(std::stod(man.at("completeness")) == Catch::Approx(wsum).margin(1e-12));
    CHECK(std::stod(man.at("mean_work")) == Catch::Approx(mean).margin(1e-10));
    CHECK(man.at("mode") == "effective");
    CHECK(man.count("wall_time_ms") == 1);
    // one cache entry from the final-trap diagonalization
    int entries = 0;
    for (auto& e : fs::directory_iterator(dir / "run/cache")) {
        ++entries;
        CHECK(slurp(e.path()).substr(0, 4) == "OSC1");
    }
    CHECK(entries == 1);
}

TEST_CASE("repeat runs are byte-identical, warm or cold") {
    auto dir = scratch("determinism");
    std::string args = "work --N 2 --g 5 --gamma 0.5 --e-cut 12 --out run";
    REQUIRE(run_cli(dir, args).exit_code == 0);
    std::string cold = slurp(dir / "run/work.csv");
    REQUIRE(run_cli(dir, args).exit_code == 0);  // warm: reads the cache
    CHECK(slurp(dir / "run/work.csv") == cold);
    // cold again with a separate cache
    REQUIRE(run_cli(dir, args + "2 --cache-dir fresh").exit_code == 0);
    CHECK(slurp(dir / "run2/work.csv") == cold);
}

TEST_CASE("corrupted cache entries are recomputed") {
    auto dir = scratch("cachecorrupt");
    std::string args = "spectrum --N 2 --g 5 --gamma 0.5 --e-cut 10 --out run";
    REQUIRE(run_cli(dir, args).exit_code == 0);
    std::string first = slurp(dir / "run/spectrum.csv");
    for (auto& e : fs::directory_iterator(dir / "run/cache")) {
        std::ofstream f(e.path(), std::ios::binary | std::ios::trunc);
        f << "XXXXgarbage";
    }
    REQUIRE(run_cli(dir, args).exit_code == 0);
    CHECK(slurp(dir / "run/spectrum.csv") == first);
}

TEST_CASE("OSCQ_CACHE_DIR provides the cache location") {
    auto dir = scratch("envcache");
    std::string cache = (dir / "elsewhere").string();
    std::string cmd = "cd " + dir.string() + " && OSCQ_CACHE_DIR=" + cache + " " + OSCQ_BIN +
                      " spectrum --N 1 --g 0 --e-cut 6 --out run > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(cache));
    CHECK(!fs::exists(dir / "run/cache"));
}

TEST_CASE("free OTOC series equals sin^2 t") {
    auto dir = scratch("otoc_free");
    auto r = run_cli(dir,
                     "otoc --N 1 --g 0 --gamma 0.5 --e-cut 30 --T 6.4 --dt 0.1 --out run");
    REQUIRE(r.exit_code == 0);
    auto [header, rows] = read_csv(dir / "run/otoc.csv");
    REQUIRE(header == std::vector<std::string>{"t", "ReD", "ImD", "ReI", "ImI", "ReF", "ImF", "C"});
    REQUIRE(rows.size() >= 60);
    for (const auto& row : rows) {
        double t = std::stod(row[0]);
        double c = std::stod(row[7]);
        REQUIRE(std::abs(c - std::sin(t) * std::sin(t)) < 1e-10);
    }
}

TEST_CASE("config file seeds parameters and flags override it") {
    auto dir = scratch("config");
    {
        std::ofstream f(dir / "run.toml");
        f << "# scratch configuration\n"
          << "N = 2\n"
          << "g = 0\n"
          << "gamma = 0.5\n"
          << "e_cut = 12\n";
    }
    auto r = run_cli(dir, "quench --config run.toml --gamma 0.75 --out run");
    REQUIRE(r.exit_code == 0);
    auto man = read_manifest(dir / "run/quench_manifest.txt");
    CHECK(man.at("g") == "0");
    CHECK(man.at("e_cut") == "12");
    CHECK(man.at("gamma") == "0.75");  // flag beats file
    CHECK(run_cli(dir, "quench --config missing.toml").exit_code == 2);
    {
        std::ofstream f(dir / "bad.toml");
        f << "frobnicate = 7\n";
    }
    auto bad = run_cli(dir, "quench --config bad.toml");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("unknown key") != std::string::npos);
}

TEST_CASE("avg reports the sector averages and additivity") {
    auto dir = scratch("avg");
    auto r = run_cli(dir, "avg --N 2 --g 5 --gamma 0.5 --e-cut 16 --out run");
    REQUIRE(r.exit_code == 0);
    auto [header, rows] = read_csv(dir / "run/avg.csv");
    std::map<std::string, double> vals;
    for (const auto& row : rows) vals[row[0]] = std::stod(row[1]);
    CHECK(vals.at("c_rr") == 0.5);
    CHECK(vals.at("c_rr_numeric") == Catch::Approx(0.5).margin(1e-6));
    CHECK(vals.at("additivity_residual") < 1e-6);
    CHECK(vals.at("c_xx") == Catch::Approx(2.52).margin(2e-2));
    CHECK(vals.at("c_xx") - vals.at("c_yy") == Catch::Approx(0.125).margin(1e-6));
    CHECK(vals.at("window_mean_c_yy") == Catch::Approx(vals.at("c_yy")).epsilon(2e-2));
}

TEST_CASE("check passes at g=5 and fails on the resonant free spectrum") {
    auto dir = scratch("check");
    auto ok = run_cli(dir, "check --N 2 --g 5 --gamma 0.5 --e-cut 16 --out pass");
    CHECK(ok.exit_code == 0);
    auto [h1, rows1] = read_csv(dir / "pass/check.csv");
    std::map<std::string, std::string> vals1;
    for (const auto& row : rows1) vals1[row[0]] = row[1];
    CHECK(vals1.at("conditions_met") == "1");
    CHECK(vals1.at("quadruplet_resonances") == "0");
    CHECK(std::stod(vals1.at("diag_residual")) < 1e-10);

    auto bad = run_cli(dir, "check --N 2 --g 0 --gamma 0.5 --e-cut 16 --out fail");
    CHECK(bad.exit_code == 3);
    auto [h2, rows2] = read_csv(dir / "fail/check.csv");
    std::map<std::string, std::string> vals2;
    for (const auto& row : rows2) vals2[row[0]] = row[1];
    CHECK(vals2.at("conditions_met") == "0");
    CHECK(std::stol(vals2.at("quadruplet_resonances")) > 0);
}

TEST_CASE("sweep output feeds the fit subcommand") {
    auto dir = scratch("sweepfit");
    auto sw = run_cli(dir,
                      "sweep --g 0 --Ns 2 3 4 --gammas 0.5 0.75 1.25 1.5 "
                      "--e-cut-pair 16 --e-cut-many 14 --work-only --out run "
                      "--emit-plot-script");
    REQUIRE(sw.exit_code == 0);
    auto [header, rows] = read_csv(dir / "run/sweep.csv");
    REQUIRE(rows.size() == 12);
    for (const auto& row : rows) {
        double gamma = std::stod(row[2]);
        double s = gamma - 1.0 / gamma;
        double expect = std::stod(row[0]) / 8.0 * s * s;
        CHECK(std::stod(row[4]) == Catch::Approx(expect).margin(5e-3));
        // a clean row ends with an empty error cell, dropped by the splitter
        CHECK(row.size() == 8);
    }
    CHECK(fs::exists(dir / "run/sweep.csv.gp"));

    auto ft = run_cli(dir, "fit --input run/sweep.csv --form work --out run");
    REQUIRE(ft.exit_code == 0);
    auto [h2, rows2] = read_csv(dir / "run/fit.csv");
    std::map<std::string, double> vals;
    for (const auto& row : rows2) vals[row[0]] = std::stod(row[1]);
    CHECK(vals.at("b") == Catch::Approx(1.0).margin(0.02));
    CHECK(vals.at("lambda") == Catch::Approx(0.125).epsilon(0.02));
    CHECK(vals.at("converged") == 1.0);

    // two distinct N only: the fit must refuse
    {
        std::ofstream f(dir / "short.csv");
        f << "N,g,gamma,e_cut,var_w,c_bar,completeness,method,error\n";
        for (const auto& row : rows)
            if (row[0] != "4") {
                for (std::size_t i = 0; i < row.size(); ++i)
                    f << (i ? "," : "") << row[i];
                f << "\n";
            }
    }
    auto refuse = run_cli(dir, "fit --input short.csv --form work --out run");
    CHECK(refuse.exit_code == 2);
    CHECK(refuse.err.find("distinct N") != std::string::npos);
}

TEST_CASE("jobs pool reproduces the sequential sweep byte for byte") {
    auto dir = scratch("jobs");
    std::string base =
        "sweep --g 0 --Ns 2 --gammas 0.5 0.75 1.25 --e-cut-pair 12 --work-only";
    REQUIRE(run_cli(dir, base + " --out seq").exit_code == 0);
    REQUIRE(run_cli(dir, base + " --out par --jobs 3 --cache-dir pcache").exit_code == 0);
    CHECK(slurp(dir / "par/sweep.csv") == slurp(dir / "seq/sweep.csv"));
}
