#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "v2b/cli.hpp"
#include "v2b/common.hpp"
#include "v2b/datagen.hpp"
#include "v2b/rl.hpp"
#include "test_util.hpp"

using namespace v2b;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// run_cli prints tables and progress lines; keep the test log clean.
struct QuietStdout {
    int saved;
    QuietStdout() : saved(dup(1)) {
        std::fflush(stdout);
        FILE* sink = std::freopen("/dev/null", "w", stdout);
        (void)sink;
    }
    ~QuietStdout() {
        std::fflush(stdout);
        dup2(saved, 1);
        close(saved);
    }
};

int run(std::vector<std::string> args) {
    QuietStdout quiet;
    return cli::run_cli(args);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("v2b_cli_" + std::to_string(getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// hourly slots keep the planner fast
json quiet_scenario() {
    return {{"arrival_rate", 2.0},
            {"weekdays", 3},
            {"building_noise_kw", 2.0},
            {"seed", 7},
            {"tariff",
             {{"theta_e_offpeak", 0.11271},
              {"theta_e_peak", 0.1466},
              {"peak_start_hour", 6},
              {"peak_end_hour", 22},
              {"theta_d", 9.62},
              {"delta_h", 1.0},
              {"demand_includes_delta", true},
              {"demand_peak_hours_only", true}}}};
}

json site_config() {
    return {{"scenario", quiet_scenario()},
            {"chargers", json::array({{{"id", 0}, {"p_min_kw", -10.0}, {"p_max_kw", 10.0}},
                                      {{"id", 1}, {"p_min_kw", 0.0}, {"p_max_kw", 20.0}}})}};
}

fs::path write_json(const fs::path& dir, const std::string& name, const json& j) {
    fs::path p = dir / name;
    std::ofstream f(p);
    f << j.dump(2);
    return p;
}

}  // namespace

TEST_CASE("weight triples parse strictly") {
    auto w = cli::parse_weights("1,2.5,3");
    CHECK(w.missing == 1.0);
    CHECK(w.energy == 2.5);
    CHECK(w.demand == 3.0);
    auto spaced = cli::parse_weights(" 100 , 1 , 0 ");
    CHECK(spaced.missing == 100.0);
    CHECK(spaced.demand == 0.0);
    CHECK_THROWS_AS(cli::parse_weights("1,2"), ConfigError);
    CHECK_THROWS_AS(cli::parse_weights("1,2,3,4"), ConfigError);
    CHECK_THROWS_AS(cli::parse_weights("1,two,3"), ConfigError);
    CHECK_THROWS_AS(cli::parse_weights("1,2,-3"), ConfigError);
    CHECK_THROWS_AS(cli::parse_weights("1,2e,3"), ConfigError);
}

TEST_CASE("usage errors exit 2, help exits 0") {
    unsetenv("V2BLAB_OUT");
    CHECK(run({}) == 2);
    CHECK(run({"bogus"}) == 2);
    CHECK(run({"--help"}) == 0);
    CHECK(run({"sample"}) == 2);                               // --config required
    CHECK(run({"solve", "does_not_exist.json"}) == 2);         // unreadable input
    CHECK(run({"eval", "--episodes", "/no/such/dir"}) == 2);
}

TEST_CASE("sample writes months, daily splits, and a replayable manifest") {
    unsetenv("V2BLAB_OUT");
    fs::path dir = fresh_dir("sample");
    fs::path cfg = write_json(dir, "site.json", site_config());
    fs::path out = dir / "run";

    CHECK(run({"sample", "--config", cfg.string(), "--out", out.string(), "-n", "2", "--seed",
               "3"}) == 0);

    json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("format") == "v2b-manifest");
    CHECK(manifest.at("command") == "sample");
    CHECK(manifest.at("entries").size() == 2);
    CHECK(manifest.at("entries")[0].at("seed") == 3);
    CHECK(manifest.at("entries")[1].at("seed") == 4);
    CHECK(manifest.at("estimated_peak_kw").get<double>() > 0.0);

    for (int k = 0; k < 2; ++k) {
        const json& entry = manifest.at("entries")[k];
        datagen::EpisodeFile ef =
            datagen::load_episode((out / entry.at("file").get<std::string>()).string());
        ef.episode.validate();
        CHECK(ef.chargers.size() == 2);
        CHECK(ef.episode.estimated_peak_kw ==
              manifest.at("estimated_peak_kw").get<double>());
        // three weekdays per month at hourly resolution
        CHECK(ef.episode.n_slots == 3 * 24);
        for (const auto& day_name : entry.at("days")) {
            datagen::EpisodeFile day =
                datagen::load_episode((out / day_name.get<std::string>()).string());
            CHECK(day.episode.n_slots == 24);
        }
    }

    // identical invocation, different directory: byte-identical artifacts
    fs::path out2 = dir / "run2";
    CHECK(run({"sample", "--config", cfg.string(), "--out", out2.string(), "-n", "2", "--seed",
               "3"}) == 0);
    for (const char* name : {"month_000.json", "month_001.json", "days/month_000_day_00.json"})
        CHECK(slurp(out / name) == slurp(out2 / name));
    CHECK(json::parse(slurp(out2 / "manifest.json")).at("entries") == manifest.at("entries"));

    // the estimate is optional
    fs::path out3 = dir / "run3";
    CHECK(run({"sample", "--config", cfg.string(), "--out", out3.string(), "--no-estimate"}) ==
          0);
    datagen::EpisodeFile raw = datagen::load_episode((out3 / "month_000.json").string());
    CHECK(raw.episode.estimated_peak_kw == 0.0);
}

TEST_CASE("config files reject unknown keys at every level") {
    unsetenv("V2BLAB_OUT");
    fs::path dir = fresh_dir("strict");
    fs::path out = dir / "out";

    json top = site_config();
    top["extra"] = 1;
    CHECK(run({"sample", "--config", write_json(dir, "a.json", top).string(), "--out",
               out.string()}) == 2);

    json scen = site_config();
    scen["scenario"]["arrival_rat"] = 3;  // typo
    CHECK(run({"sample", "--config", write_json(dir, "b.json", scen).string(), "--out",
               out.string()}) == 2);

    json tar = site_config();
    tar["scenario"]["tariff"]["theta"] = 1;
    CHECK(run({"sample", "--config", write_json(dir, "c.json", tar).string(), "--out",
               out.string()}) == 2);

    json charg = site_config();
    charg["chargers"][0]["power"] = 5;
    CHECK(run({"sample", "--config", write_json(dir, "d.json", charg).string(), "--out",
               out.string()}) == 2);

    json train_cfg = site_config();
    train_cfg["months"] = 1;
    train_cfg["ddpg"] = {{"max_steps", 10}, {"learning_rate", 1.0}};  // no such knob
    CHECK(run({"train", "--config", write_json(dir, "e.json", train_cfg).string(), "--out",
               out.string()}) == 2);
}

TEST_CASE("solve writes the optimum and maps status to the exit code") {
    unsetenv("V2BLAB_OUT");
    fs::path dir = fresh_dir("solve");

    // one-day instance with a single session
    Tariff hourly;
    hourly.delta_h = 1.0;
    std::vector<double> building(24, 30.0);
    Episode ep = testutil::make_episode(building, {testutil::session(8, 16, 0.3, 0.7)}, hourly);
    std::vector<ChargerSpec> chargers = {{0, 0.0, 20.0}};
    fs::path ep_path = dir / "ep.json";
    datagen::save_episode(ep_path.string(), {ep, chargers, 0});

    fs::path out = dir / "sol";
    CHECK(run({"solve", ep_path.string(), "--out", out.string(), "--weights", "100,1,3"}) == 0);
    json sol = json::parse(slurp(out / "solution.json"));
    CHECK(sol.at("format") == "v2b-solution");
    CHECK(sol.at("status") == "optimal");
    CHECK(sol.at("schedule").size() == 24);
    CHECK(sol.at("schedule")[0].size() == 1);
    CHECK(sol.at("bill").at("missing_soc_kwh").get<double>() == doctest::Approx(0.0));
    CHECK(sol.at("bill").at("total_usd").get<double>() > 0.0);

    // building-only episode: the bill is pinned by the billing engine
    Episode bare = testutil::make_episode(building, {}, hourly);
    fs::path bare_path = dir / "bare.json";
    datagen::save_episode(bare_path.string(), {bare, chargers, 0});
    fs::path out2 = dir / "sol2";
    CHECK(run({"solve", bare_path.string(), "--out", out2.string()}) == 0);
    json sol2 = json::parse(slurp(out2 / "solution.json"));
    BillBreakdown base = building_only_bill(hourly, building);
    CHECK(sol2.at("bill").at("total_usd").get<double>() == doctest::Approx(base.total_usd));
    CHECK(sol2.at("bill").at("peak_kw").get<double>() == doctest::Approx(base.peak_kw));

    // a demand target below the building floor cannot be met
    CHECK(run({"solve", ep_path.string(), "--peak-cap", "1"}) == 3);
    // a generous target can
    CHECK(run({"solve", ep_path.string(), "--peak-cap", "100"}) == 0);

    CHECK(run({"solve", ep_path.string(), "--weights", "1,2"}) == 2);
    CHECK(run({"solve", ep_path.string(), "--assignment", "sideways"}) == 2);
}

TEST_CASE("train emits a checkpoint, a monotone log, and is reproducible") {
    unsetenv("V2BLAB_OUT");
    fs::path dir = fresh_dir("train");
    json cfg = site_config();
    cfg["months"] = 1;
    cfg["holdout_months"] = 1;
    cfg["seed"] = 3;
    cfg["ddpg"] = {{"max_steps", 120}, {"batch", 16}, {"buffer", 5000}, {"eval_every", 2},
                   {"r_pg", 1.0}};
    fs::path cfg_path = write_json(dir, "train.json", cfg);

    fs::path out = dir / "a";
    CHECK(run({"train", "--config", cfg_path.string(), "--out", out.string()}) == 0);

    rl::Checkpoint ckpt = rl::load_checkpoint((out / "checkpoint.json").string());
    ckpt.actor.validate();
    CHECK(ckpt.actor.out_dim() == kChargerFeatureSlots);

    std::string log = slurp(out / "train_log.csv");
    std::stringstream ss(log);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "step,reward,eval_bill");
    int prev = -1, rows = 0;
    while (std::getline(ss, line)) {
        int step = std::stoi(line.substr(0, line.find(',')));
        CHECK(step > prev);
        prev = step;
        ++rows;
    }
    CHECK(rows > 0);

    json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("config").at("ddpg").at("seed") == 3);  // follows the run seed
    CHECK(manifest.at("result").at("steps") == 120);
    CHECK(manifest.at("result").at("buffer_oracle_fraction").get<double>() == 1.0);

    fs::path out2 = dir / "b";
    CHECK(run({"train", "--config", cfg_path.string(), "--out", out2.string()}) == 0);
    CHECK(slurp(out / "checkpoint.json") == slurp(out2 / "checkpoint.json"));
    CHECK(slurp(out / "train_log.csv") == slurp(out2 / "train_log.csv"));

    // --seed overrides the config seed
    fs::path out3 = dir / "c";
    CHECK(run({"train", "--config", cfg_path.string(), "--out", out3.string(), "--seed",
               "4"}) == 0);
    CHECK(json::parse(slurp(out3 / "manifest.json")).at("config").at("seed") == 4);
    CHECK(slurp(out / "checkpoint.json") != slurp(out3 / "checkpoint.json"));
}

TEST_CASE("eval compares policies over an episode directory") {
    unsetenv("V2BLAB_OUT");
    fs::path dir = fresh_dir("eval");
    fs::path cfg = write_json(dir, "site.json", site_config());
    fs::path run_dir = dir / "run";
    REQUIRE(run({"sample", "--config", cfg.string(), "--out", run_dir.string(), "-n", "2",
                 "--seed", "3"}) == 0);

    // pointing at the sample root skips the manifest and reads the two months
    fs::path out = dir / "ev";
    CHECK(run({"eval", "--episodes", run_dir.string(), "--out", out.string(), "--policies",
               "trickle,fc,oracle", "--weights", "100,1,3"}) == 0);

    std::string summary = slurp(out / "eval_summary.csv");
    std::stringstream ss(summary);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "policy,bill_mean,bill_std,shave_mean,shave_std,missing_soc");
    std::vector<std::string> policies;
    while (std::getline(ss, line)) policies.push_back(line.substr(0, line.find(',')));
    CHECK(policies == std::vector<std::string>{"fc", "oracle", "trickle"});  // name order

    json report = json::parse(slurp(out / "eval.json"));
    CHECK(report.at("episodes") == json::array({"month_000", "month_001"}));
    double best = 1e18, oracle_bill = 0;
    for (const auto& row : report.at("rows")) {
        CHECK(row.at("bills").size() == 2);
        best = std::min(best, row.at("bill_mean").get<double>());
        if (row.at("policy") == "oracle") oracle_bill = row.at("bill_mean").get<double>();
    }
    CHECK(oracle_bill == doctest::Approx(best));  // the planner sets the floor

    std::string rows_csv = slurp(out / "eval_episodes.csv");
    CHECK(std::count(rows_csv.begin(), rows_csv.end(), '\n') == 1 + 3 * 2);

    // fan-out does not change a byte
    fs::path out_par = dir / "ev_par";
    CHECK(run({"eval", "--episodes", run_dir.string(), "--out", out_par.string(), "--policies",
               "trickle,fc,oracle", "--weights", "100,1,3", "--jobs", "4"}) == 0);
    CHECK(slurp(out_par / "eval_summary.csv") == summary);
    CHECK(slurp(out_par / "eval_episodes.csv") == rows_csv);

    // mixed sites are refused
    Tariff hourly;
    hourly.delta_h = 1.0;
    Episode stray = testutil::make_episode(std::vector<double>(24, 10.0), {}, hourly);
    datagen::save_episode((run_dir / "aa_stray.json").string(), {stray, {{0, 0.0, 5.0}}, 0});
    CHECK(run({"eval", "--episodes", run_dir.string(), "--out", (dir / "ev2").string()}) == 2);
}

TEST_CASE("the environment variable supplies a default output root") {
    fs::path dir = fresh_dir("envroot");
    fs::path cfg = write_json(dir, "site.json", site_config());
    setenv("V2BLAB_OUT", dir.c_str(), 1);
    CHECK(run({"sample", "--config", cfg.string(), "--no-estimate"}) == 0);
    unsetenv("V2BLAB_OUT");
    CHECK(fs::exists(dir / "sample" / "month_000.json"));
    CHECK(fs::exists(dir / "sample" / "manifest.json"));
}
