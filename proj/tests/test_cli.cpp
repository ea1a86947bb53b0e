#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "smatch/common.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() { return SMATCH_CLI_PATH; }

fs::path tmp_root() {
    fs::path p = fs::path(SMATCH_TEST_TMPDIR) / "cli";
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
#ifdef _WIN32
    return status;
#else
    return WEXITSTATUS(status);
#endif
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small 3-arm dataset with covariate-dependent assignment; deterministic.
fs::path write_input_csv() {
    fs::path path = tmp_root() / "input.csv";
    if (fs::exists(path)) return path;
    auto rng = smatch::make_rng(4242);
    std::ofstream out(path);
    out << "id,treatment,x1,x2,y\n";
    const char* labels[3] = {"a", "b", "c"};
    for (int i = 0; i < 240; ++i) {
        const double x1 = smatch::draw_normal(rng);
        const double x2 = smatch::draw_normal(rng);
        int t;
        if (i < 3) {
            t = i;  // every level appears
        } else {
            const double u = smatch::draw_uniform(rng);
            const double p1 = 1.0 / (1.0 + std::exp(-x1));
            t = u < 0.4 ? 0 : (u < 0.4 + 0.6 * p1 ? 1 : 2);
        }
        const double y = t + x1 + x2 + 0.5 * smatch::draw_normal(rng);
        char id[8];
        std::snprintf(id, sizeof id, "u%04d", i + 1);
        out << id << "," << labels[t] << "," << x1 << "," << x2 << "," << y << "\n";
    }
    return path;
}

std::string common_args(const fs::path& out_dir) {
    return "--input " + write_input_csv().string() +
           " --id-col id --treatment-col treatment --covariate-cols x1,x2" +
           " --response-col y --out-dir " + out_dir.string() + " --seed 7";
}

}  // namespace

TEST_CASE("cli score: writes a score table with k-1 columns") {
    fs::path dir = tmp_root() / "score";
    REQUIRE(run("score " + common_args(dir) + " --model glm") == 0);
    std::string csv = slurp(dir / "scores.csv");
    REQUIRE(!csv.empty());
    // header line follows the '#' metadata block
    std::istringstream ss(csv);
    std::string line;
    while (std::getline(ss, line) && !line.empty() && line[0] == '#') {
    }
    CHECK(line == "id,pivot_label,s_log_1,s_log_2");
    CHECK(csv.find("# seed=7") != std::string::npos);
}

TEST_CASE("cli: unknown model name fails with exit 2") {
    fs::path dir = tmp_root() / "badmodel";
    CHECK(run("score " + common_args(dir) + " --model nope") == 2);
    CHECK(run("nonsense-subcommand") == 2);
}

TEST_CASE("cli: repeated runs are byte identical") {
    fs::path d1 = tmp_root() / "rep1";
    fs::path d2 = tmp_root() / "rep2";
    for (const fs::path& d : {d1, d2}) {
        REQUIRE(run("score " + common_args(d) + " --model glm") == 0);
        REQUIRE(run("match " + common_args(d) + " --model glm --pivot a") == 0);
        REQUIRE(run("estimate " + common_args(d) + " --match " + (d / "match.json").string() +
                    " --dose-order a,b,c") == 0);
        REQUIRE(run("diagnose " + common_args(d) + " --match " + (d / "match.json").string()) ==
                0);
    }
    for (const char* f :
         {"scores.csv", "match.json", "match.csv", "effects.json", "effects.csv", "chain.csv",
          "balance.csv"}) {
        CAPTURE(f);
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
}

TEST_CASE("cli match: zero caliper leaves everything unmatched but exits 0") {
    fs::path dir = tmp_root() / "caliper0";
    REQUIRE(run("match " + common_args(dir) + " --model glm --caliper 0") == 0);
    std::string json = slurp(dir / "match.json");
    CHECK(json.find("\"groups\": []") != std::string::npos);
}

TEST_CASE("cli match: brute force agrees with the default index") {
    fs::path d1 = tmp_root() / "idx";
    fs::path d2 = tmp_root() / "bf";
    REQUIRE(run("match " + common_args(d1) + " --model glm") == 0);
    REQUIRE(run("match " + common_args(d2) + " --model glm --brute-force") == 0);
    CHECK(slurp(d1 / "match.csv") == slurp(d2 / "match.csv"));
}

TEST_CASE("cli match: all-pivots selection reports the chosen pivot") {
    fs::path dir = tmp_root() / "allpiv";
    REQUIRE(run("match " + common_args(dir) + " --model glm --all-pivots") == 0);
    std::string csv = slurp(dir / "match.csv");
    CHECK(csv.find("# selected_pivot=") != std::string::npos);
}

TEST_CASE("cli estimate: missing match file is an input error") {
    fs::path dir = tmp_root() / "nomatch";
    CHECK(run("estimate " + common_args(dir) + " --match " + (dir / "absent.json").string()) ==
          2);
}

TEST_CASE("cli simulate: malformed scenario file is an input error") {
    fs::path dir = tmp_root() / "badscenario";
    fs::create_directories(dir);
    std::ofstream(dir / "scenario.json") << "{this is not json";
    CHECK(run("simulate --out-dir " + dir.string() + " --scenario " +
              (dir / "scenario.json").string()) == 2);
    CHECK(run("simulate --out-dir " + dir.string()) == 2);  // neither flag given
}

TEST_CASE("cli simulate: reference scenario smoke run") {
    fs::path dir = tmp_root() / "sim";
    REQUIRE(run("simulate --reference --n 200 --reps 3 --seed 5 --out-dir " + dir.string()) ==
            0);
    std::string json = slurp(dir / "report.json");
    CHECK(json.find("\"true_effect\"") != std::string::npos);
    CHECK(!slurp(dir / "report.csv").empty());
    // a single replication cannot produce a Monte Carlo se
    CHECK(run("simulate --reference --n 200 --reps 1 --out-dir " + dir.string()) == 2);
}

TEST_CASE("cli: SMATCH_SEED env var is the seed fallback") {
    fs::path d1 = tmp_root() / "envseed";
    fs::path d2 = tmp_root() / "optseed";
    std::string base = "--input " + write_input_csv().string() +
                       " --id-col id --treatment-col treatment --covariate-cols x1,x2" +
                       " --response-col y --model ratio";
    const std::string env_cmd = "SMATCH_SEED=31 " + cli() + " score " + base + " --out-dir " +
                                d1.string() + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
    REQUIRE(run("score " + base + " --out-dir " + d2.string() + " --seed 31") == 0);
    CHECK(slurp(d1 / "scores.csv") == slurp(d2 / "scores.csv"));
}
