#include "v2b/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>

#include "v2b/common.hpp"
#include "v2b/datagen.hpp"
#include "v2b/heuristics.hpp"
#include "v2b/rl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace v2b::cli {
namespace {

// Shortest round-trip decimal form; the one number format used everywhere so
// identical runs produce identical bytes.
std::string fmt(double x) { return json(x).dump(); }

void write_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + tmp.string());
        f << text;
    }
    fs::rename(tmp, path);
}

json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

void check_tariff_keys(const json& j, const std::string& where) {
    require_keys(j, where,
                 {"theta_e_offpeak", "theta_e_peak", "peak_start_hour", "peak_end_hour", "theta_d",
                  "delta_h", "demand_includes_delta", "demand_peak_hours_only"});
}

void check_scenario_keys(const json& j, const std::string& where) {
    require_keys(j, where,
                 {"arrival_rate", "arrival_hour_mean", "arrival_hour_sd", "stay_hours_mean",
                  "stay_hours_sd", "stay_hours_min", "soc_init_mean", "soc_init_sd",
                  "soc_req_mean", "soc_req_sd", "capacities_kwh", "capacity_weights",
                  "building_base_kw", "building_noise_kw", "weekdays", "tariff", "seed"});
    if (j.contains("tariff")) check_tariff_keys(j.at("tariff"), where + ".tariff");
}

std::vector<ChargerSpec> chargers_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError(where + ": expected a non-empty charger array");
    std::vector<ChargerSpec> out;
    for (size_t i = 0; i < arr.size(); ++i) {
        const std::string slot = where + "[" + std::to_string(i) + "]";
        require_keys(arr[i], slot, {"id", "p_min_kw", "p_max_kw"});
        ChargerSpec c;
        try {
            c.id = arr[i].value("id", static_cast<int>(i));
            c.p_min_kw = arr[i].at("p_min_kw");
            c.p_max_kw = arr[i].at("p_max_kw");
        } catch (const json::exception& e) {
            throw ConfigError(slot + ": " + e.what());
        }
        out.push_back(c);
    }
    validate_chargers(out);
    return out;
}

json chargers_to_json(const std::vector<ChargerSpec>& chargers) {
    json arr = json::array();
    for (const ChargerSpec& c : chargers)
        arr.push_back({{"id", c.id}, {"p_min_kw", c.p_min_kw}, {"p_max_kw", c.p_max_kw}});
    return arr;
}

rl::DdpgConfig ddpg_from_json(const json& j, const std::string& where) {
    require_keys(j, where,
                 {"gamma", "lr_actor", "lr_critic", "batch", "buffer", "noise_sigma", "r_pg",
                  "lambdas", "train_step", "update_step", "tau_soft", "seed", "hidden",
                  "max_steps", "greedy_override", "eval_every", "patience"});
    rl::DdpgConfig c;
    try {
        c.gamma = j.value("gamma", c.gamma);
        c.lr_actor = j.value("lr_actor", c.lr_actor);
        c.lr_critic = j.value("lr_critic", c.lr_critic);
        c.batch = j.value("batch", c.batch);
        c.buffer = j.value("buffer", c.buffer);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.r_pg = j.value("r_pg", c.r_pg);
        c.train_step = j.value("train_step", c.train_step);
        c.update_step = j.value("update_step", c.update_step);
        c.tau_soft = j.value("tau_soft", c.tau_soft);
        c.seed = j.value("seed", c.seed);
        c.hidden = j.value("hidden", c.hidden);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.greedy_override = j.value("greedy_override", c.greedy_override);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.patience = j.value("patience", c.patience);
        if (j.contains("lambdas")) {
            const json& l = j.at("lambdas");
            require_keys(l, where + ".lambdas", {"missing", "energy", "demand"});
            c.lambdas.missing = l.value("missing", c.lambdas.missing);
            c.lambdas.energy = l.value("energy", c.lambdas.energy);
            c.lambdas.demand = l.value("demand", c.lambdas.demand);
        }
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

json ddpg_to_json(const rl::DdpgConfig& c) {
    return {{"gamma", c.gamma},
            {"lr_actor", c.lr_actor},
            {"lr_critic", c.lr_critic},
            {"batch", c.batch},
            {"buffer", c.buffer},
            {"noise_sigma", c.noise_sigma},
            {"r_pg", c.r_pg},
            {"lambdas",
             {{"missing", c.lambdas.missing},
              {"energy", c.lambdas.energy},
              {"demand", c.lambdas.demand}}},
            {"train_step", c.train_step},
            {"update_step", c.update_step},
            {"tau_soft", c.tau_soft},
            {"seed", c.seed},
            {"hidden", c.hidden},
            {"max_steps", c.max_steps},
            {"greedy_override", c.greedy_override},
            {"eval_every", c.eval_every},
            {"patience", c.patience}};
}

AssignmentPolicy parse_assignment(const std::string& name) {
    AssignmentPolicy ap;
    if (name == "bi")
        ap.priority = PriorityClass::BidirectionalFirst;
    else if (name == "uni")
        ap.priority = PriorityClass::UnidirectionalFirst;
    else if (name == "random")
        ap.priority = PriorityClass::RandomCharger;
    else
        throw ConfigError("unknown assignment '" + name + "' (want bi, uni, or random)");
    return ap;
}

fs::path resolve_out(const std::string& flag, const char* command) {
    if (!flag.empty()) return fs::path(flag);
    if (const char* root = std::getenv("V2BLAB_OUT")) return fs::path(root) / command;
    throw ConfigError("no output directory: pass --out or set V2BLAB_OUT");
}

bool out_available(const std::string& flag) {
    return !flag.empty() || std::getenv("V2BLAB_OUT") != nullptr;
}

void write_manifest(const fs::path& dir, json body) {
    body["format"] = "v2b-manifest";
    body["version"] = 1;
    write_atomic(dir / "manifest.json", body.dump(2) + "\n");
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t a = tok.find_first_not_of(" \t");
        size_t b = tok.find_last_not_of(" \t");
        if (a == std::string::npos) continue;
        out.push_back(tok.substr(a, b - a + 1));
    }
    return out;
}

json bill_to_json(const BillBreakdown& bill) {
    return {{"energy_usd", bill.energy_usd},
            {"demand_usd", bill.demand_usd},
            {"total_usd", bill.total_usd},
            {"peak_kw", bill.peak_kw},
            {"missing_soc_kwh", bill.missing_soc_kwh}};
}

void print_bill(lp::Status status, double objective, const BillBreakdown& bill) {
    std::printf("status=%s objective=%s total_usd=%s energy_usd=%s demand_usd=%s peak_kw=%s "
                "missing_soc_kwh=%s\n",
                lp::to_string(status), fmt(objective).c_str(), fmt(bill.total_usd).c_str(),
                fmt(bill.energy_usd).c_str(), fmt(bill.demand_usd).c_str(),
                fmt(bill.peak_kw).c_str(), fmt(bill.missing_soc_kwh).c_str());
}

void write_solution(const fs::path& dir, lp::Status status, double objective, double peak_kw,
                    int iterations, const BillBreakdown& bill,
                    const std::vector<double>& missing_soc, const Schedule& schedule) {
    json j;
    j["format"] = "v2b-solution";
    j["version"] = 1;
    j["status"] = lp::to_string(status);
    j["objective"] = objective;
    j["peak_kw"] = peak_kw;
    j["iterations"] = iterations;
    j["bill"] = bill_to_json(bill);
    j["missing_soc"] = missing_soc;
    j["schedule"] = schedule;
    write_atomic(dir / "solution.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------- sample

int cmd_sample(const std::string& config_path, const std::string& out_flag, int n,
               unsigned long long seed, double inflate, bool estimate) {
    if (n < 1) throw ConfigError("need at least one month");
    json cfg = read_json_file(config_path);
    require_keys(cfg, "config", {"scenario", "chargers"});
    if (!cfg.contains("scenario") || !cfg.contains("chargers"))
        throw ConfigError("config needs both 'scenario' and 'chargers'");
    check_scenario_keys(cfg.at("scenario"), "scenario");
    datagen::ScenarioSpec spec = datagen::scenario_from_json(cfg.at("scenario").dump());
    std::vector<ChargerSpec> chargers = chargers_from_json(cfg.at("chargers"), "chargers");

    fs::path out = resolve_out(out_flag, "sample");
    fs::create_directories(out / "days");

    std::vector<Episode> months;
    months.reserve(n);
    for (int k = 0; k < n; ++k) months.push_back(datagen::sample_month(spec, seed + k));
    double est = 0;
    if (estimate) {
        est = datagen::estimate_peak(months, chargers, {}, inflate);
        for (Episode& m : months) m.estimated_peak_kw = est;
    }

    json entries = json::array();
    for (int k = 0; k < n; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "month_%03d.json", k);
        datagen::save_episode((out / name).string(), {months[k], chargers, seed + k});
        int dropped = 0;
        std::vector<Episode> days = datagen::split_daily(months[k], &dropped);
        json day_names = json::array();
        for (size_t d = 0; d < days.size(); ++d) {
            char dn[48];
            std::snprintf(dn, sizeof dn, "month_%03d_day_%02d.json", k, static_cast<int>(d));
            datagen::save_episode((out / "days" / dn).string(), {days[d], chargers, seed + k});
            day_names.push_back(std::string("days/") + dn);
        }
        entries.push_back({{"file", name},
                           {"seed", seed + k},
                           {"days", std::move(day_names)},
                           {"dropped_sessions", dropped}});
    }

    json manifest = {{"command", "sample"},
                     {"config",
                      {{"scenario", json::parse(datagen::scenario_to_json(spec))},
                       {"chargers", chargers_to_json(chargers)}}},
                     {"months", n},
                     {"seed", seed},
                     {"inflate", inflate},
                     {"estimate_peak", estimate},
                     {"entries", std::move(entries)}};
    if (estimate) manifest["estimated_peak_kw"] = est;
    write_manifest(out, std::move(manifest));
    std::printf("sample: wrote %d month(s) to %s\n", n, out.string().c_str());
    return 0;
}

// ----------------------------------------------------------------- solve

int cmd_solve(const std::string& episode_path, const std::string& weights_text,
              const std::string& out_flag, const std::string& assignment_name,
              unsigned long long seed, double peak_cap) {
    datagen::EpisodeFile ef = datagen::load_episode(episode_path);
    oracle::Weights w = parse_weights(weights_text);
    AssignmentPolicy ap = parse_assignment(assignment_name);

    lp::Status status;
    double objective = 0, peak_kw = 0;
    int iterations = 0;
    BillBreakdown bill;
    std::vector<double> missing;
    Schedule schedule(ef.episode.n_slots, Action(ef.chargers.size(), 0.0));

    if (peak_cap >= 0) {
        // fixed demand target: one program over the whole horizon, no peak var
        auto occ = occupancy_timeline(ef.chargers, ef.episode, ap.priority, ap.tie_break, seed);
        oracle::BuildOptions bo;
        bo.peak_cap_kw = peak_cap;
        oracle::BuiltLp built = oracle::build_lp(ef.episode, ef.chargers, occ, w, bo);
        lp::Solution res = lp::solve(built.problem);
        status = res.status;
        objective = res.objective;
        iterations = res.iterations;
        missing.assign(ef.episode.sessions.size(), 0.0);
        if (status == lp::Status::Optimal) {
            for (size_t i = 0; i < built.index.power.size(); ++i) {
                const auto& pv = built.index.power[i];
                schedule[pv.slot][pv.charger] = res.x[i];
            }
            for (size_t v = 0; v < missing.size(); ++v)
                if (built.index.slack_var[v] >= 0) missing[v] = res.x[built.index.slack_var[v]];
            std::vector<double> socs =
                final_socs_of_schedule(ef.chargers, ef.episode, schedule, occ);
            bill = compute_bill(ef.episode.tariff, ef.episode.building_kw, schedule,
                                ef.episode.sessions, socs);
            peak_kw = bill.peak_kw;
        }
    } else {
        oracle::OracleSolution sol =
            oracle::solve_episode(ef.episode, ef.chargers, ap, w, seed);
        status = sol.status;
        objective = sol.objective;
        peak_kw = sol.peak_kw;
        iterations = sol.iterations;
        bill = sol.bill;
        missing = sol.missing_soc;
        schedule = std::move(sol.schedule);
    }

    print_bill(status, objective, bill);
    if (out_available(out_flag)) {
        fs::path out = resolve_out(out_flag, "solve");
        fs::create_directories(out);
        write_solution(out, status, objective, peak_kw, iterations, bill, missing, schedule);
        write_manifest(out, {{"command", "solve"},
                             {"episode", episode_path},
                             {"weights", weights_text},
                             {"assignment", assignment_name},
                             {"seed", seed},
                             {"peak_cap_kw", peak_cap},
                             {"status", lp::to_string(status)}});
    }
    return status == lp::Status::Optimal ? 0 : 3;
}

// ----------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::string& out_flag, bool seed_given,
              unsigned long long seed_flag) {
    json cfg = read_json_file(config_path);
    require_keys(cfg, "config",
                 {"scenario", "chargers", "ddpg", "months", "holdout_months", "inflate",
                  "estimate_peak", "seed"});
    if (!cfg.contains("scenario") || !cfg.contains("chargers"))
        throw ConfigError("config needs both 'scenario' and 'chargers'");
    check_scenario_keys(cfg.at("scenario"), "scenario");
    datagen::ScenarioSpec spec = datagen::scenario_from_json(cfg.at("scenario").dump());
    std::vector<ChargerSpec> chargers = chargers_from_json(cfg.at("chargers"), "chargers");

    int months = 1, holdout_months = 0;
    double inflate = 0.0;
    bool estimate = true;
    unsigned long long seed = 0;
    try {
        months = cfg.value("months", months);
        holdout_months = cfg.value("holdout_months", holdout_months);
        inflate = cfg.value("inflate", inflate);
        estimate = cfg.value("estimate_peak", estimate);
        seed = cfg.value("seed", seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (seed_given) seed = seed_flag;
    if (months < 1) throw ConfigError("months must be >= 1");
    if (holdout_months < 0) throw ConfigError("holdout_months must be >= 0");

    rl::DdpgConfig ddpg;
    bool eval_every_pinned = false, train_seed_pinned = false;
    if (cfg.contains("ddpg")) {
        ddpg = ddpg_from_json(cfg.at("ddpg"), "ddpg");
        eval_every_pinned = cfg.at("ddpg").contains("eval_every");
        train_seed_pinned = cfg.at("ddpg").contains("seed");
    }
    if (!train_seed_pinned) ddpg.seed = seed;
    if (holdout_months > 0 && !eval_every_pinned) ddpg.eval_every = 10;

    std::vector<Episode> train_months, holdout;
    for (int k = 0; k < months; ++k) train_months.push_back(datagen::sample_month(spec, seed + k));
    for (int k = 0; k < holdout_months; ++k)
        holdout.push_back(datagen::sample_month(spec, seed + months + k));
    double est = 0;
    if (estimate) {
        est = datagen::estimate_peak(train_months, chargers, ddpg.lambdas, inflate);
        for (Episode& m : train_months) m.estimated_peak_kw = est;
        for (Episode& m : holdout) m.estimated_peak_kw = est;
    }
    std::vector<Episode> train_days, holdout_days;
    for (const Episode& m : train_months) {
        std::vector<Episode> days = datagen::split_daily(m);
        train_days.insert(train_days.end(), days.begin(), days.end());
    }
    for (const Episode& m : holdout) {
        std::vector<Episode> days = datagen::split_daily(m);
        holdout_days.insert(holdout_days.end(), days.begin(), days.end());
    }
    NormConstants norm = NormConstants::from_episodes(train_days, chargers);

    rl::TrainResult result = rl::train(train_days, chargers, ddpg, norm, holdout_days);

    fs::path out = resolve_out(out_flag, "train");
    fs::create_directories(out);
    rl::save_checkpoint((out / "checkpoint.json").string(), {result.actor, norm});
    std::string log = "step,reward,eval_bill\n";
    for (const rl::EvalPoint& pt : result.eval_history)
        log += std::to_string(pt.step) + "," + fmt(pt.reward) + "," + fmt(pt.bill_usd) + "\n";
    write_atomic(out / "train_log.csv", log);
    write_manifest(
        out,
        {{"command", "train"},
         {"config",
          {{"scenario", json::parse(datagen::scenario_to_json(spec))},
           {"chargers", chargers_to_json(chargers)},
           {"ddpg", ddpg_to_json(ddpg)},
           {"months", months},
           {"holdout_months", holdout_months},
           {"inflate", inflate},
           {"estimate_peak", estimate},
           {"seed", seed}}},
         {"estimated_peak_kw", est},
         {"result",
          {{"steps", result.steps},
           {"episodes_run", result.episodes_run},
           {"updates", result.updates},
           {"buffer_oracle_fraction", result.buffer_oracle_fraction},
           {"best_eval_reward", result.best_eval_reward},
           {"early_stopped", result.early_stopped}}}});
    std::printf("train: %d steps, %d updates, %d episode(s); checkpoint in %s\n", result.steps,
                result.updates, result.episodes_run, out.string().c_str());
    return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& episodes_dir, const std::string& checkpoint_path,
             const std::string& policies_text, const std::string& weights_text,
             const std::string& out_flag, const std::string& assignment_name, int jobs,
             unsigned long long seed, bool no_override) {
    EpisodeSet set = load_episode_dir(episodes_dir);

    rl::EvalOptions opts;
    opts.policies = split_csv(policies_text);
    opts.weights = parse_weights(weights_text);
    opts.assignment = parse_assignment(assignment_name);
    opts.jobs = jobs;
    opts.seed = seed;
    opts.greedy_override = !no_override;

    rl::Checkpoint ckpt;
    const rl::Mlp* actor = nullptr;
    NormConstants norm;
    if (!checkpoint_path.empty()) {
        ckpt = rl::load_checkpoint(checkpoint_path);
        actor = &ckpt.actor;
        norm = ckpt.norm;
    } else {
        norm = NormConstants::from_episodes(set.episodes, set.chargers);
    }

    std::vector<rl::EvalRow> rows = rl::evaluate(set.episodes, set.chargers, actor, norm, opts);
    std::sort(rows.begin(), rows.end(),
              [](const rl::EvalRow& a, const rl::EvalRow& b) { return a.policy < b.policy; });

    std::string summary = "policy,bill_mean,bill_std,shave_mean,shave_std,missing_soc\n";
    for (const rl::EvalRow& r : rows)
        summary += r.policy + "," + fmt(r.bill_mean) + "," + fmt(r.bill_std) + "," +
                   fmt(r.shave_mean) + "," + fmt(r.shave_std) + "," + fmt(r.missing_mean) + "\n";
    std::string episodes = "policy,episode,bill,shave,missing\n";
    for (const rl::EvalRow& r : rows)
        for (size_t k = 0; k < set.episodes.size(); ++k)
            episodes += r.policy + "," + set.names[k] + "," + fmt(r.bills[k]) + "," +
                        fmt(r.shaves[k]) + "," + fmt(r.missing[k]) + "\n";

    json jrows = json::array();
    for (const rl::EvalRow& r : rows)
        jrows.push_back({{"policy", r.policy},
                         {"bill_mean", r.bill_mean},
                         {"bill_std", r.bill_std},
                         {"shave_mean", r.shave_mean},
                         {"shave_std", r.shave_std},
                         {"missing_soc", r.missing_mean},
                         {"bills", r.bills},
                         {"shaves", r.shaves},
                         {"missing", r.missing}});
    json report = {{"format", "v2b-eval"},
                   {"version", 1},
                   {"episodes", set.names},
                   {"rows", std::move(jrows)}};

    fs::path out = resolve_out(out_flag, "eval");
    fs::create_directories(out);
    write_atomic(out / "eval_summary.csv", summary);
    write_atomic(out / "eval_episodes.csv", episodes);
    write_atomic(out / "eval.json", report.dump(2) + "\n");
    write_manifest(out, {{"command", "eval"},
                         {"episodes_dir", episodes_dir},
                         {"checkpoint", checkpoint_path},
                         {"policies", opts.policies},
                         {"weights", weights_text},
                         {"assignment", assignment_name},
                         {"jobs", jobs},
                         {"seed", seed},
                         {"greedy_override", opts.greedy_override},
                         {"n_episodes", set.episodes.size()}});
    std::fputs(summary.c_str(), stdout);
    return 0;
}

}  // namespace

oracle::Weights parse_weights(const std::string& text) {
    std::vector<std::string> parts = split_csv(text);
    if (parts.size() != 3)
        throw ConfigError("weights must be 'missing,energy,demand' (three numbers)");
    double vals[3];
    for (int i = 0; i < 3; ++i) {
        size_t pos = 0;
        try {
            vals[i] = std::stod(parts[i], &pos);
        } catch (const std::exception&) {
            throw ConfigError("bad weight '" + parts[i] + "'");
        }
        if (pos != parts[i].size()) throw ConfigError("bad weight '" + parts[i] + "'");
        if (vals[i] < 0) throw ConfigError("weights must be >= 0");
    }
    return {vals[0], vals[1], vals[2]};
}

EpisodeSet load_episode_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError(dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    EpisodeSet set;
    for (const fs::path& p : files) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        json j;
        try {
            j = json::parse(ss.str());
        } catch (const json::exception& e) {
            throw ConfigError(p.string() + ": " + e.what());
        }
        if (!j.is_object() || j.value("format", std::string()) != "v2b-episode") continue;
        datagen::EpisodeFile ef = datagen::episode_from_json(ss.str());
        if (set.episodes.empty()) {
            set.chargers = ef.chargers;
        } else if (ef.chargers.size() != set.chargers.size() ||
                   !std::equal(ef.chargers.begin(), ef.chargers.end(), set.chargers.begin(),
                               [](const ChargerSpec& a, const ChargerSpec& b) {
                                   return a.id == b.id && a.p_min_kw == b.p_min_kw &&
                                          a.p_max_kw == b.p_max_kw;
                               })) {
            throw ConfigError("chargers differ across episode files: " + p.filename().string());
        }
        set.episodes.push_back(std::move(ef.episode));
        set.names.push_back(p.stem().string());
    }
    if (set.episodes.empty()) throw ConfigError("no episode files found in " + dir);
    return set;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"vehicle-to-building charging laboratory"};
    app.require_subcommand(1);

    // sample
    std::string s_config, s_out;
    int s_n = 1;
    unsigned long long s_seed = 0;
    double s_inflate = 0.0;
    bool s_no_estimate = false;
    CLI::App* sample = app.add_subcommand("sample", "draw synthetic monthly episodes");
    sample->add_option("--config", s_config, "scenario + chargers JSON")->required();
    sample->add_option("--out", s_out, "output directory");
    sample->add_option("-n,--months", s_n, "months to draw");
    sample->add_option("--seed", s_seed, "base seed; month k uses seed+k");
    sample->add_option("--inflate", s_inflate, "relative margin on the peak estimate");
    sample->add_flag("--no-estimate", s_no_estimate, "skip the planner-based peak estimate");

    // solve
    std::string v_episode, v_weights = "1,1,3", v_out, v_assign = "bi";
    unsigned long long v_seed = 0;
    double v_cap = -1;
    CLI::App* solve = app.add_subcommand("solve", "full-information optimum of one episode");
    solve->add_option("episode", v_episode, "episode JSON file")->required();
    solve->add_option("--weights", v_weights, "objective weights missing,energy,demand");
    solve->add_option("--out", v_out, "write solution.json here");
    solve->add_option("--assignment", v_assign, "charger assignment: bi, uni, random");
    solve->add_option("--seed", v_seed, "assignment tie-break seed");
    solve->add_option("--peak-cap", v_cap, "fixed demand target in kW instead of a free peak");

    // train
    std::string t_config, t_out;
    unsigned long long t_seed = 0;
    CLI::App* train = app.add_subcommand("train", "sample a scenario and fit the actor-critic");
    train->add_option("--config", t_config, "training run JSON")->required();
    train->add_option("--out", t_out, "output directory");
    CLI::Option* t_seed_opt = train->add_option("--seed", t_seed, "override the config seed");

    // eval
    std::string e_dir, e_ckpt, e_policies, e_weights = "1,1,3", e_out, e_assign = "bi";
    int e_jobs = 1;
    unsigned long long e_seed = 0;
    bool e_no_override = false;
    CLI::App* eval = app.add_subcommand("eval", "compare policies on an episode directory");
    eval->add_option("--episodes", e_dir, "directory of episode JSON files")->required();
    eval->add_option("--checkpoint", e_ckpt, "trained policy checkpoint");
    eval->add_option("--policies", e_policies, "comma list; default all applicable");
    eval->add_option("--weights", e_weights, "planner weights missing,energy,demand");
    eval->add_option("--out", e_out, "output directory");
    eval->add_option("--assignment", e_assign, "charger assignment: bi, uni, random");
    eval->add_option("--jobs", e_jobs, "episode-level parallelism");
    eval->add_option("--seed", e_seed, "rollout seed base");
    eval->add_flag("--no-override", e_no_override, "disable the off-peak greedy override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sample->parsed())
            return cmd_sample(s_config, s_out, s_n, s_seed, s_inflate, !s_no_estimate);
        if (solve->parsed()) return cmd_solve(v_episode, v_weights, v_out, v_assign, v_seed, v_cap);
        if (train->parsed())
            return cmd_train(t_config, t_out, t_seed_opt->count() > 0, t_seed);
        if (eval->parsed())
            return cmd_eval(e_dir, e_ckpt, e_policies, e_weights, e_out, e_assign, e_jobs, e_seed,
                            e_no_override);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FeasibilityError& e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("v2blab");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace v2b::cli
