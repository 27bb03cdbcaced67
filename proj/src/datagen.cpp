#include "v2b/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "v2b/common.hpp"

namespace v2b::datagen {

using nlohmann::json;

void ScenarioSpec::validate() const {
    tariff.validate();
    if (arrival_rate < 0) throw ConfigError("scenario: arrival rate must be >= 0");
    if (arrival_hour_sd < 0 || stay_hours_sd < 0 || soc_init_sd < 0 || soc_req_sd < 0)
        throw ConfigError("scenario: spreads must be >= 0");
    if (stay_hours_min <= 0) throw ConfigError("scenario: minimum stay must be positive");
    if (weekdays <= 0) throw ConfigError("scenario: weekday count must be positive");
    if (capacities_kwh.empty() || capacities_kwh.size() != capacity_weights.size())
        throw ConfigError("scenario: capacities and weights must pair up");
    for (double c : capacities_kwh)
        if (c <= 0) throw ConfigError("scenario: capacities must be positive");
    double wsum = 0;
    for (double w : capacity_weights) {
        if (w < 0) throw ConfigError("scenario: capacity weights must be >= 0");
        wsum += w;
    }
    if (wsum <= 0) throw ConfigError("scenario: capacity weights must not all vanish");
    if (!building_base_kw.empty() &&
        static_cast<int>(building_base_kw.size()) != tariff.slots_per_day())
        throw ConfigError("scenario: building base curve must cover one day");
    for (double b : building_base_kw)
        if (b < 0) throw ConfigError("scenario: building base must be >= 0");
    if (building_noise_kw < 0) throw ConfigError("scenario: noise scale must be >= 0");
    if (soc_init_mean < 0 || soc_init_mean > 1 || soc_req_mean < 0 || soc_req_mean > 1)
        throw ConfigError("scenario: SoC means must lie in [0,1]");
}

std::vector<double> default_building_curve(int slots_per_day) {
    // office-ish: ~35 kW overnight, ~105 kW early afternoon
    std::vector<double> base(slots_per_day);
    for (int j = 0; j < slots_per_day; ++j) {
        double hour = 24.0 * j / slots_per_day;
        double bump = std::exp(-0.5 * std::pow((hour - 13.0) / 3.5, 2));
        base[j] = 35.0 + 70.0 * bump;
    }
    return base;
}

namespace {

std::mt19937_64 scenario_rng(const ScenarioSpec& spec, unsigned long long seed) {
    return std::mt19937_64(spec.seed ^ (0x9E3779B97F4A7C15ULL * (seed + 1)));
}

std::vector<int> month_day_layout(int weekdays) {
    std::vector<int> dows;
    int seen = 0;
    for (int d = 0; seen < weekdays; ++d) {
        int dow = d % 7;
        dows.push_back(dow);
        if (dow < 5) ++seen;
    }
    while (!dows.empty() && dows.back() >= 5) dows.pop_back();
    return dows;
}

double clip(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

}  // namespace

Episode sample_month(const ScenarioSpec& spec, unsigned long long seed) {
    spec.validate();
    std::mt19937_64 rng = scenario_rng(spec, seed);
    const int S = spec.tariff.slots_per_day();
    const std::vector<double> base =
        spec.building_base_kw.empty() ? default_building_curve(S) : spec.building_base_kw;
    std::normal_distribution<double> noise(0.0, spec.building_noise_kw);
    auto load_at = [&](int slot_of_day) {
        return std::max(0.0, base[slot_of_day] + (spec.building_noise_kw > 0 ? noise(rng) : 0.0));
    };

    Episode ep;
    ep.tariff = spec.tariff;
    ep.day_of_week = month_day_layout(spec.weekdays);
    const int n_days = static_cast<int>(ep.day_of_week.size());
    ep.n_slots = n_days * S;

    // seven building-only warmup days feed the history window
    ep.history_peaks_kw.clear();
    for (int d = 0; d < 7; ++d) {
        double peak = 0;
        for (int j = 0; j < S; ++j) peak = std::max(peak, load_at(j));
        ep.history_peaks_kw.push_back(peak);
    }

    ep.building_kw.resize(ep.n_slots);
    for (int t = 0; t < ep.n_slots; ++t) ep.building_kw[t] = load_at(t % S);

    std::normal_distribution<double> hour_d(spec.arrival_hour_mean, spec.arrival_hour_sd);
    std::normal_distribution<double> stay_d(spec.stay_hours_mean, spec.stay_hours_sd);
    std::normal_distribution<double> init_d(spec.soc_init_mean, spec.soc_init_sd);
    std::normal_distribution<double> req_d(spec.soc_req_mean, spec.soc_req_sd);
    std::discrete_distribution<int> cap_d(spec.capacity_weights.begin(),
                                          spec.capacity_weights.end());
    const double dh = spec.tariff.delta_h;

    for (int d = 0; d < n_days; ++d) {
        if (ep.day_of_week[d] >= 5) continue;
        int n = 0;
        if (spec.arrival_rate > 0) {
            std::poisson_distribution<int> count(spec.arrival_rate);
            n = count(rng);
        }
        for (int v = 0; v < n; ++v) {
            int arr = static_cast<int>(std::floor(clip(hour_d(rng), 0.0, 24.0 - 2 * dh) / dh));
            arr = std::min(arr, S - 2);
            int stay = std::max(
                1, static_cast<int>(std::lround(
                       clip(stay_d(rng), std::max(dh, spec.stay_hours_min), 24.0) / dh)));
            EvSession s;
            s.arrival_slot = d * S + arr;
            s.departure_slot = d * S + std::min(S, arr + stay);
            s.soc_init = clip(init_d(rng), 0.05, 0.85);
            s.soc_req = clip(req_d(rng), s.soc_init, 0.9);
            s.capacity_kwh = spec.capacities_kwh[cap_d(rng)];
            ep.sessions.push_back(s);
        }
    }
    std::stable_sort(ep.sessions.begin(), ep.sessions.end(),
                     [](const EvSession& a, const EvSession& b) {
                         return a.arrival_slot != b.arrival_slot
                                    ? a.arrival_slot < b.arrival_slot
                                    : a.departure_slot < b.departure_slot;
                     });
    for (size_t v = 0; v < ep.sessions.size(); ++v) ep.sessions[v].id = static_cast<int>(v);
    ep.validate();
    return ep;
}

std::vector<Episode> split_daily(const Episode& monthly, int* dropped) {
    monthly.validate();
    const int S = monthly.tariff.slots_per_day();
    if (monthly.n_slots % S != 0)
        throw ConfigError("split: the month must hold whole days");
    const int n_days = monthly.n_slots / S;
    if (dropped) *dropped = 0;

    std::deque<double> window(monthly.history_peaks_kw.begin(), monthly.history_peaks_kw.end());
    std::vector<Episode> days;
    for (int d = 0; d < n_days; ++d) {
        const int start = d * S, end = (d + 1) * S;
        if (monthly.day_of_week[d] < 5) {
            Episode day;
            day.tariff = monthly.tariff;
            day.n_slots = S;
            day.building_kw.assign(monthly.building_kw.begin() + start,
                                   monthly.building_kw.begin() + end);
            day.day_of_week = {monthly.day_of_week[d]};
            day.estimated_peak_kw = monthly.estimated_peak_kw;
            day.history_peaks_kw.assign(window.begin(), window.end());
            for (const EvSession& s : monthly.sessions) {
                if (s.arrival_slot < start || s.arrival_slot >= end) continue;
                EvSession cut = s;
                cut.id = static_cast<int>(day.sessions.size());
                cut.arrival_slot = s.arrival_slot - start;
                cut.departure_slot = std::min(S, s.departure_slot - start);
                day.sessions.push_back(cut);
            }
            day.validate();
            days.push_back(std::move(day));
        } else if (dropped) {
            for (const EvSession& s : monthly.sessions)
                if (s.arrival_slot >= start && s.arrival_slot < end) ++*dropped;
        }
        double peak = 0;
        for (int j = start; j < end; ++j) peak = std::max(peak, monthly.building_kw[j]);
        window.pop_front();
        window.push_back(peak);
    }
    return days;
}

double estimate_peak(const std::vector<Episode>& monthly, const std::vector<ChargerSpec>& chargers,
                     const oracle::Weights& weights, double inflate) {
    if (monthly.empty()) throw ConfigError("peak estimate needs at least one month");
    if (inflate < 0) throw ConfigError("peak inflation must be >= 0");
    std::vector<double> peaks;
    for (const Episode& ep : monthly) {
        auto sol = oracle::solve_episode(ep, chargers, {}, weights);
        if (sol.status != lp::Status::Optimal)
            throw NumericError("peak estimate: planner failed with status " + std::string() +
                               lp::to_string(sol.status));
        peaks.push_back(sol.peak_kw);
    }
    const double n = static_cast<double>(peaks.size());
    double mean = std::accumulate(peaks.begin(), peaks.end(), 0.0) / n;
    double sd = 0;
    if (peaks.size() > 1) {
        double s2 = 0;
        for (double p : peaks) s2 += (p - mean) * (p - mean);
        sd = std::sqrt(s2 / (n - 1.0));
    }
    double lower = mean - kZ99 * sd / std::sqrt(n);
    return std::max(0.0, lower) * (1.0 + inflate);
}

KMeansResult kmeans_1d(const std::vector<double>& values, int k, std::mt19937_64& rng) {
    if (values.empty()) throw ConfigError("k-means needs data");
    if (k <= 0) throw ConfigError("k-means needs k > 0");
    const int n = static_cast<int>(values.size());
    k = std::min(k, n);

    KMeansResult out;
    // k-means++ seeding
    std::uniform_int_distribution<int> first(0, n - 1);
    out.centers.push_back(values[first(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(out.centers.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : out.centers) best = std::min(best, (values[i] - c) * (values[i] - c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0) {  // all remaining points sit on existing centers
            out.centers.push_back(values[first(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng), acc = 0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= target) {
                pick = i;
                break;
            }
        }
        out.centers.push_back(values[pick]);
    }

    out.labels.assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = iter == 0;
        double objective = 0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = (values[i] - out.centers[c]) * (values[i] - out.centers[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (out.labels[i] != best) changed = true;
            out.labels[i] = best;
            objective += bd;
        }
        out.objective_per_iter.push_back(objective);
        out.iterations = iter + 1;
        if (!changed && iter > 0) break;

        std::vector<double> sum(k, 0.0);
        std::vector<int> cnt(k, 0);
        for (int i = 0; i < n; ++i) {
            sum[out.labels[i]] += values[i];
            ++cnt[out.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (cnt[c] > 0) {
                out.centers[c] = sum[c] / cnt[c];
            } else {
                // revive an empty cluster at the point farthest from its center
                int far = 0;
                double fd = -1;
                for (int i = 0; i < n; ++i) {
                    double d = (values[i] - out.centers[out.labels[i]]) *
                               (values[i] - out.centers[out.labels[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                out.centers[c] = values[far];
            }
        }
    }
    return out;
}

SampleSet make_sample_set(std::vector<Episode> episodes, const std::vector<ChargerSpec>& chargers,
                          const oracle::Weights& weights) {
    SampleSet set;
    set.episodes = std::move(episodes);
    for (const Episode& ep : set.episodes) {
        auto sol = oracle::solve_episode(ep, chargers, {}, weights);
        if (sol.status != lp::Status::Optimal)
            throw NumericError("sample set: planner failed with status " + std::string() +
                               lp::to_string(sol.status));
        set.demand_charges_usd.push_back(sol.bill.demand_usd);
    }
    return set;
}

Split downsample(SampleSet& set, int k, int n_train, int n_test, unsigned long long seed) {
    const int n = static_cast<int>(set.episodes.size());
    if (set.demand_charges_usd.size() != set.episodes.size())
        throw ConfigError("downsample: every episode needs a demand charge");
    if (n_train < 0 || n_test < 0 || n_train + n_test > n)
        throw ConfigError("downsample: asked for " + std::to_string(n_train + n_test) +
                          " samples but only " + std::to_string(n) + " exist");
    std::mt19937_64 rng(seed);
    KMeansResult km = kmeans_1d(set.demand_charges_usd, k, rng);
    set.labels = km.labels;
    const int kk = static_cast<int>(km.centers.size());

    std::vector<std::vector<int>> members(kk);
    for (int i = 0; i < n; ++i) members[km.labels[i]].push_back(i);
    for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);

    // proportional quotas, remainders to the largest clusters with room
    auto allocate = [&](int want, const std::vector<int>& used) {
        std::vector<int> quota(kk, 0);
        int given = 0;
        for (int c = 0; c < kk; ++c) {
            int cap = static_cast<int>(members[c].size()) - used[c];
            quota[c] = std::min(cap, static_cast<int>(std::floor(
                                         1.0 * want * members[c].size() / n)));
            given += quota[c];
        }
        std::vector<int> order(kk);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return members[a].size() != members[b].size() ? members[a].size() > members[b].size()
                                                          : a < b;
        });
        while (given < want) {
            bool moved = false;
            for (int c : order) {
                if (given == want) break;
                if (quota[c] + used[c] < static_cast<int>(members[c].size())) {
                    ++quota[c];
                    ++given;
                    moved = true;
                }
            }
            if (!moved) throw ConfigError("downsample: clusters ran out of samples");
        }
        return quota;
    };

    std::vector<int> none(kk, 0);
    std::vector<int> train_quota = allocate(n_train, none);
    std::vector<int> test_quota = allocate(n_test, train_quota);

    Split split;
    for (int c = 0; c < kk; ++c) {
        for (int i = 0; i < train_quota[c]; ++i) split.train_indices.push_back(members[c][i]);
        for (int i = 0; i < test_quota[c]; ++i)
            split.test_indices.push_back(members[c][train_quota[c] + i]);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    return split;
}

// ------------------------------------------------------------ serialization

namespace {

json tariff_to_json(const Tariff& t) {
    return {{"theta_e_offpeak", t.theta_e_offpeak},
            {"theta_e_peak", t.theta_e_peak},
            {"peak_start_hour", t.peak_start_hour},
            {"peak_end_hour", t.peak_end_hour},
            {"theta_d", t.theta_d},
            {"delta_h", t.delta_h},
            {"demand_includes_delta", t.demand_includes_delta},
            {"demand_peak_hours_only", t.demand_peak_hours_only}};
}

Tariff tariff_from_json(const json& j) {
    Tariff t;
    t.theta_e_offpeak = j.at("theta_e_offpeak");
    t.theta_e_peak = j.at("theta_e_peak");
    t.peak_start_hour = j.at("peak_start_hour");
    t.peak_end_hour = j.at("peak_end_hour");
    t.theta_d = j.at("theta_d");
    t.delta_h = j.at("delta_h");
    t.demand_includes_delta = j.at("demand_includes_delta");
    t.demand_peak_hours_only = j.at("demand_peak_hours_only");
    return t;
}

}  // namespace

std::string episode_to_json(const EpisodeFile& file) {
    json j;
    j["format"] = "v2b-episode";
    j["version"] = 1;
    j["seed"] = file.seed;
    j["tariff"] = tariff_to_json(file.episode.tariff);
    json chargers = json::array();
    for (const ChargerSpec& c : file.chargers)
        chargers.push_back({{"id", c.id}, {"p_min_kw", c.p_min_kw}, {"p_max_kw", c.p_max_kw}});
    j["chargers"] = std::move(chargers);
    j["n_slots"] = file.episode.n_slots;
    j["building_kw"] = file.episode.building_kw;
    j["day_of_week"] = file.episode.day_of_week;
    j["estimated_peak_kw"] = file.episode.estimated_peak_kw;
    j["history_peaks_kw"] = file.episode.history_peaks_kw;
    json sessions = json::array();
    for (const EvSession& s : file.episode.sessions)
        sessions.push_back({{"id", s.id},
                            {"arrival_slot", s.arrival_slot},
                            {"departure_slot", s.departure_slot},
                            {"soc_init", s.soc_init},
                            {"soc_req", s.soc_req},
                            {"soc_min", s.soc_min},
                            {"soc_max", s.soc_max},
                            {"capacity_kwh", s.capacity_kwh}});
    j["sessions"] = std::move(sessions);
    return j.dump(2);
}

EpisodeFile episode_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad episode json: ") + e.what());
    }
    try {
        if (j.at("format") != "v2b-episode" || j.at("version") != 1)
            throw ConfigError("unrecognized episode format or version");
        EpisodeFile f;
        f.seed = j.value("seed", 0ULL);
        f.episode.tariff = tariff_from_json(j.at("tariff"));
        for (const json& c : j.at("chargers")) {
            ChargerSpec spec;
            spec.id = c.at("id");
            spec.p_min_kw = c.at("p_min_kw");
            spec.p_max_kw = c.at("p_max_kw");
            f.chargers.push_back(spec);
        }
        f.episode.n_slots = j.at("n_slots");
        f.episode.building_kw = j.at("building_kw").get<std::vector<double>>();
        f.episode.day_of_week = j.at("day_of_week").get<std::vector<int>>();
        f.episode.estimated_peak_kw = j.at("estimated_peak_kw");
        f.episode.history_peaks_kw = j.at("history_peaks_kw").get<std::vector<double>>();
        for (const json& s : j.at("sessions")) {
            EvSession v;
            v.id = s.at("id");
            v.arrival_slot = s.at("arrival_slot");
            v.departure_slot = s.at("departure_slot");
            v.soc_init = s.at("soc_init");
            v.soc_req = s.at("soc_req");
            v.soc_min = s.at("soc_min");
            v.soc_max = s.at("soc_max");
            v.capacity_kwh = s.at("capacity_kwh");
            f.episode.sessions.push_back(v);
        }
        f.episode.validate();
        validate_chargers(f.chargers);
        return f;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("incomplete episode: ") + e.what());
    }
}

void save_episode(const std::string& path, const EpisodeFile& file) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + tmp);
        f << episode_to_json(file) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

EpisodeFile load_episode(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return episode_from_json(ss.str());
}

std::string scenario_to_json(const ScenarioSpec& spec) {
    json j;
    j["arrival_rate"] = spec.arrival_rate;
    j["arrival_hour_mean"] = spec.arrival_hour_mean;
    j["arrival_hour_sd"] = spec.arrival_hour_sd;
    j["stay_hours_mean"] = spec.stay_hours_mean;
    j["stay_hours_sd"] = spec.stay_hours_sd;
    j["stay_hours_min"] = spec.stay_hours_min;
    j["soc_init_mean"] = spec.soc_init_mean;
    j["soc_init_sd"] = spec.soc_init_sd;
    j["soc_req_mean"] = spec.soc_req_mean;
    j["soc_req_sd"] = spec.soc_req_sd;
    j["capacities_kwh"] = spec.capacities_kwh;
    j["capacity_weights"] = spec.capacity_weights;
    j["building_base_kw"] = spec.building_base_kw;
    j["building_noise_kw"] = spec.building_noise_kw;
    j["weekdays"] = spec.weekdays;
    j["tariff"] = tariff_to_json(spec.tariff);
    j["seed"] = spec.seed;
    return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad scenario json: ") + e.what());
    }
    try {
        ScenarioSpec spec;
        spec.arrival_rate = j.value("arrival_rate", spec.arrival_rate);
        spec.arrival_hour_mean = j.value("arrival_hour_mean", spec.arrival_hour_mean);
        spec.arrival_hour_sd = j.value("arrival_hour_sd", spec.arrival_hour_sd);
        spec.stay_hours_mean = j.value("stay_hours_mean", spec.stay_hours_mean);
        spec.stay_hours_sd = j.value("stay_hours_sd", spec.stay_hours_sd);
        spec.stay_hours_min = j.value("stay_hours_min", spec.stay_hours_min);
        spec.soc_init_mean = j.value("soc_init_mean", spec.soc_init_mean);
        spec.soc_init_sd = j.value("soc_init_sd", spec.soc_init_sd);
        spec.soc_req_mean = j.value("soc_req_mean", spec.soc_req_mean);
        spec.soc_req_sd = j.value("soc_req_sd", spec.soc_req_sd);
        spec.capacities_kwh = j.value("capacities_kwh", spec.capacities_kwh);
        spec.capacity_weights = j.value("capacity_weights", spec.capacity_weights);
        spec.building_base_kw = j.value("building_base_kw", spec.building_base_kw);
        spec.building_noise_kw = j.value("building_noise_kw", spec.building_noise_kw);
        spec.weekdays = j.value("weekdays", spec.weekdays);
        if (j.contains("tariff")) spec.tariff = tariff_from_json(j.at("tariff"));
        spec.seed = j.value("seed", spec.seed);
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad scenario: ") + e.what());
    }
}

}  // namespace v2b::datagen
