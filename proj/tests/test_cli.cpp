#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "epiworld/cli.hpp"
#include "epiworld/config.hpp"
#include "epiworld/io.hpp"

namespace fs = std::filesystem;
using namespace epiworld;

namespace {

const std::string kConfigDir = EPIWORLD_SOURCE_DIR "/config";

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "epiworld");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data());
}

/// Fresh scratch directory removed on scope exit.
struct Scratch {
    fs::path root;

    explicit Scratch(const std::string& name)
        : root(fs::temp_directory_path() / ("epiworld_cli_" + name + "_" + std::to_string(::getpid())))
    {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }

    std::string path(const std::string& leaf) const { return (root / leaf).string(); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
        }
    }
    return out;
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("unknown or missing subcommands exit with usage")
    {
        CHECK(run_cli({}) == kExitUsage);
        CHECK(run_cli({"explode"}) == kExitUsage);
        CHECK(run_cli({"case", "--name", "nonsense", "--seed", "1"}) == kExitUsage);
        CHECK(run_cli({"simulate", "--bogus-flag"}) == kExitUsage);
        CHECK(run_cli({"--help"}) == kExitOk);
        CHECK(usage().find("simulate") != std::string::npos);
    }

    TEST_CASE("simulate writes provenance-stamped artifacts and is byte-identical on rerun")
    {
        Scratch s("simulate");
        const auto cfg = kConfigDir + "/default.ini";
        REQUIRE(run_cli({"simulate", "--config", cfg, "--seed", "3", "--out", s.path("a")}) == kExitOk);
        REQUIRE(run_cli({"simulate", "--config", cfg, "--seed", "3", "--out", s.path("b")}) == kExitOk);
        const auto a = snapshot(s.path("a"));
        const auto b = snapshot(s.path("b"));
        CHECK(a == b);
        for (const char* f : {"trajectory.csv", "observations.csv", "actions.csv", "metrics.csv", "plot.csv", "run.json"}) {
            CHECK(a.count(f) == 1);
        }
        for (const auto& [name, content] : a) {
            if (name.size() > 4 && name.substr(name.size() - 4) == ".csv") {
                CHECK(content.rfind("# config_hash=", 0) == 0);
                CHECK(content.find(" seed=3\n") != std::string::npos);
            }
        }
        const auto run_json = json::parse(a.at("run.json"));
        CHECK(run_json.at("seed") == 3);
        CHECK(run_json.contains("config_hash"));

        REQUIRE(run_cli({"simulate", "--config", cfg, "--seed", "4", "--out", s.path("c")}) == kExitOk);
        CHECK(snapshot(s.path("c")).at("trajectory.csv") != a.at("trajectory.csv"));
    }

    TEST_CASE("artifacts are read back by the library readers")
    {
        Scratch s("readback");
        REQUIRE(run_cli({"simulate", "--config", kConfigDir + "/twin.ini", "--out", s.path("o")}) == kExitOk);
        std::ifstream obs(s.path("o/observations.csv"));
        std::ifstream act(s.path("o/actions.csv"));
        CHECK(read_observations_csv(obs).size() == 40);
        CHECK(read_actions_csv(act).size() == 40);
    }

    TEST_CASE("case misreporting writes a verdict and table")
    {
        Scratch s("case");
        REQUIRE(run_cli({"case", "--name", "misreporting", "--seed", "7", "--config", kConfigDir + "/default.ini",
                         "--out", s.path("o")}) == kExitOk);
        const auto files = snapshot(s.path("o"));
        REQUIRE(files.count("misreporting_verdict.json") == 1);
        CHECK(files.count("misreporting_table.csv") == 1);
        const auto v = json::parse(files.at("misreporting_verdict.json"));
        CHECK(v.at("holds") == true);
        CHECK(v.at("seed") == 7);
    }

    TEST_CASE("filter, calibrate and plan run on the twin config")
    {
        Scratch s("pipeline");
        const auto cfg = kConfigDir + "/twin.ini";
        CHECK(run_cli({"filter", "--config", cfg, "--out", s.path("f")}) == kExitOk);
        CHECK(fs::exists(s.path("f/belief.csv")));
        CHECK(run_cli({"plan", "--config", cfg, "--out", s.path("p")}) == kExitOk);
        CHECK(fs::exists(s.path("p/best_actions.csv")));
        CHECK(fs::exists(s.path("p/cem_trace.csv")));
    }

    TEST_CASE("failures exit 1 with a machine-readable error")
    {
        Scratch s("errors");
        std::ofstream(s.path("bad.ini")) << "[model]\nbeta0 = 1.5\nkappa = lots\n";
        REQUIRE(run_cli({"simulate", "--config", s.path("bad.ini"), "--seed", "1", "--out", s.path("o")}) ==
                kExitFailure);
        const auto err = json::parse(slurp(s.path("o/error.json")));
        CHECK(err.at("error").at("code") == "invalid_config");
        CHECK(err.at("error").at("message").get<std::string>().find("line 3") != std::string::npos);

        std::ofstream(s.path("noseed.ini")) << "[scenario]\nhorizon = 4\n";
        REQUIRE(run_cli({"simulate", "--config", s.path("noseed.ini"), "--out", s.path("n")}) == kExitFailure);
        CHECK(json::parse(slurp(s.path("n/error.json"))).at("error").at("code") == "missing_seed");

        CHECK(run_cli({"simulate", "--config", s.path("absent.ini"), "--seed", "1", "--out", s.path("m")}) ==
              kExitFailure);
    }

    TEST_CASE("outputs stay inside the output directory")
    {
        Scratch s("contained");
        const auto before = snapshot(s.root);
        REQUIRE(run_cli({"case", "--name", "backfill", "--seed", "2", "--config", kConfigDir + "/default.ini",
                         "--out", s.path("o")}) == kExitOk);
        for (const auto& [name, content] : snapshot(s.root)) {
            CHECK(name.rfind("o/", 0) == 0);
        }
        CHECK(before.empty());
    }

    TEST_CASE("ingest maps an OxCGRT-format file")
    {
        Scratch s("ingest");
        const Config c;
        std::ofstream csv(s.path("in.csv"));
        csv << "region,week";
        for (const auto& n : c.action_names) {
            csv << ',' << n;
        }
        csv << '\n';
        for (int w = 0; w < 3; ++w) {
            csv << "X," << w;
            for (std::size_t d = 0; d < kActionDims; ++d) {
                csv << ',' << (w + d) % 3;
            }
            csv << '\n';
        }
        csv.close();
        REQUIRE(run_cli({"ingest", "--input", s.path("in.csv"), "--out", s.path("o")}) == kExitOk);
        const auto report = json::parse(slurp(s.path("o/ingest_report.json")));
        CHECK(report.contains("gaps"));
        std::ifstream actions(s.path("o/ingested_actions.csv"));
        CHECK(read_csv(actions).rows.size() == 3);
    }
}
