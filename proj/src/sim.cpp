#include "v2b/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace v2b {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// service order: FIFO by arrival, simultaneous arrivals by tie_break
std::vector<int> service_order(const Episode& ep, TieBreak tie_break, std::mt19937_64& rng) {
    std::vector<int> order(ep.sessions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return ep.sessions[a].arrival_slot < ep.sessions[b].arrival_slot;
    });
    for (size_t lo = 0; lo < order.size();) {
        size_t hi = lo + 1;
        while (hi < order.size() &&
               ep.sessions[order[hi]].arrival_slot == ep.sessions[order[lo]].arrival_slot)
            ++hi;
        auto first = order.begin() + lo, last = order.begin() + hi;
        switch (tie_break) {
            case TieBreak::Departure:
                std::stable_sort(first, last, [&](int a, int b) {
                    return ep.sessions[a].departure_slot > ep.sessions[b].departure_slot;
                });
                break;
            case TieBreak::Capacity:
                std::stable_sort(first, last, [&](int a, int b) {
                    return ep.sessions[a].capacity_kwh > ep.sessions[b].capacity_kwh;
                });
                break;
            case TieBreak::RandomOrder:
                std::shuffle(first, last, rng);
                break;
        }
        lo = hi;
    }
    return order;
}

int pick_charger(const std::vector<ChargerSpec>& chargers, const std::vector<int>& occ,
                 PriorityClass priority, std::mt19937_64& rng) {
    std::vector<int> idle;
    for (size_t c = 0; c < chargers.size(); ++c)
        if (occ[c] < 0) idle.push_back(static_cast<int>(c));
    if (idle.empty()) return -1;
    switch (priority) {
        case PriorityClass::BidirectionalFirst:
            for (int c : idle)
                if (chargers[c].bidirectional()) return c;
            return idle.front();
        case PriorityClass::UnidirectionalFirst:
            for (int c : idle)
                if (!chargers[c].bidirectional()) return c;
            return idle.front();
        case PriorityClass::RandomCharger: {
            std::uniform_int_distribution<size_t> pick(0, idle.size() - 1);
            return idle[pick(rng)];
        }
    }
    return -1;
}

// release departures, admit arrivals, assign FIFO, refresh per-charger caches
void settle_slot(SimState& st, const Episode& ep, const std::vector<ChargerSpec>& chargers,
                 const AssignmentPolicy& policy, std::mt19937_64& rng) {
    for (size_t c = 0; c < chargers.size(); ++c)
        if (st.occupancy[c] >= 0 && ep.sessions[st.occupancy[c]].departure_slot <= st.slot)
            st.occupancy[c] = -1;
    while (!st.pending.empty() && ep.sessions[st.pending.front()].arrival_slot <= st.slot) {
        st.waiting.push_back(st.pending.front());
        st.pending.pop_front();
        ++st.arrivals_so_far;
    }
    std::erase_if(st.waiting, [&](int v) { return ep.sessions[v].departure_slot <= st.slot; });
    while (!st.waiting.empty()) {
        int c = pick_charger(chargers, st.occupancy, policy.priority, rng);
        if (c < 0) break;
        st.occupancy[c] = st.waiting.front();
        st.waiting.pop_front();
    }
    st.waiting_slot_count += static_cast<int>(st.waiting.size());

    for (size_t c = 0; c < chargers.size(); ++c) {
        int v = st.occupancy[c];
        if (v < 0) {
            st.energy_need_kwh[c] = 0;
            st.remaining_slots[c] = 0;
        } else {
            const auto& s = ep.sessions[v];
            st.energy_need_kwh[c] = (s.soc_req - st.session_soc[v]) * s.capacity_kwh;
            st.remaining_slots[c] = s.departure_slot - st.slot;
        }
    }
    st.building_kw = ep.building_kw[st.slot];
    st.day_of_week = ep.day_of_week[st.slot / ep.tariff.slots_per_day()];
}

double day_building_peak(const Episode& ep, int day) {
    int spd = ep.tariff.slots_per_day();
    double peak = 0;
    for (int j = day * spd; j < std::min((day + 1) * spd, ep.n_slots); ++j)
        peak = std::max(peak, ep.building_kw[j]);
    return peak;
}

}  // namespace

double SimState::history_mean() const {
    if (history_window.empty()) return 0;
    return std::accumulate(history_window.begin(), history_window.end(), 0.0) /
           static_cast<double>(history_window.size());
}

double SimState::history_var() const {
    if (history_window.empty()) return 0;
    double mu = history_mean(), acc = 0;
    for (double p : history_window) acc += (p - mu) * (p - mu);
    return acc / static_cast<double>(history_window.size());
}

void NormConstants::validate() const {
    if (!(max_building_kw > 0) || !(max_capacity_kwh > 0) || slots_per_day <= 0 ||
        max_window_slots <= 0 || !(max_arrivals > 0) || !std::isfinite(max_building_kw) ||
        !std::isfinite(max_capacity_kwh) || !std::isfinite(max_arrivals))
        throw ConfigError("norm constants: scales must be finite and positive");
}

NormConstants NormConstants::from_episodes(const std::vector<Episode>& episodes,
                                           const std::vector<ChargerSpec>& chargers) {
    require(!episodes.empty(), "norm constants: need at least one episode");
    validate_chargers(chargers);
    NormConstants n;
    n.max_building_kw = 1;
    n.max_capacity_kwh = 1;
    n.max_arrivals = 1;
    n.slots_per_day = episodes.front().tariff.slots_per_day();
    n.max_window_slots = n.slots_per_day;
    for (const auto& ep : episodes) {
        for (double b : ep.building_kw) n.max_building_kw = std::max(n.max_building_kw, b);
        n.max_building_kw = std::max(n.max_building_kw, ep.estimated_peak_kw);
        n.max_arrivals = std::max(n.max_arrivals, static_cast<double>(ep.sessions.size()));
        for (const auto& s : ep.sessions) {
            n.max_capacity_kwh = std::max(n.max_capacity_kwh, s.capacity_kwh);
            n.max_window_slots = std::max(n.max_window_slots, s.departure_slot - s.arrival_slot);
        }
    }
    return n;
}

Eigen::VectorXd featurize(const SimState& state, const NormConstants& norm) {
    norm.validate();
    int n = static_cast<int>(state.occupancy.size());
    require(n <= kChargerFeatureSlots, "featurize: more chargers than feature slots");
    Eigen::VectorXd f = Eigen::VectorXd::Zero(kFeatureDim);
    f[0] = static_cast<double>(state.slot % norm.slots_per_day) / norm.slots_per_day;
    f[1] = clamp01(state.building_kw / norm.max_building_kw);
    f[2] = clamp01((state.estimated_peak_kw - state.building_kw) / norm.max_building_kw);
    f[3] = clamp01(state.history_mean() / norm.max_building_kw);
    f[4] = clamp01(state.history_var() / (norm.max_building_kw * norm.max_building_kw));
    f[5] = state.day_of_week / 6.0;
    f[6] = clamp01(state.arrivals_so_far / norm.max_arrivals);
    for (int c = 0; c < n; ++c) {
        f[7 + c] = clamp01(state.energy_need_kwh[c] / norm.max_capacity_kwh);
        f[7 + kChargerFeatureSlots + c] =
            clamp01(static_cast<double>(state.remaining_slots[c]) / norm.max_window_slots);
    }
    if (!f.allFinite()) throw NumericError("featurize: non-finite feature");
    return f;
}

SimState init_state(const std::vector<ChargerSpec>& chargers, const Episode& episode,
                    const AssignmentPolicy& policy, std::mt19937_64& rng) {
    validate_chargers(chargers);
    episode.validate();
    SimState st;
    st.occupancy.assign(chargers.size(), -1);
    st.energy_need_kwh.assign(chargers.size(), 0.0);
    st.remaining_slots.assign(chargers.size(), 0);
    st.session_soc.resize(episode.sessions.size());
    for (size_t v = 0; v < episode.sessions.size(); ++v)
        st.session_soc[v] = episode.sessions[v].soc_init;
    st.estimated_peak_kw = episode.estimated_peak_kw;
    st.history_window = episode.history_peaks_kw;
    auto order = service_order(episode, policy.tie_break, rng);
    st.pending.assign(order.begin(), order.end());
    settle_slot(st, episode, chargers, policy, rng);
    return st;
}

void transition(SimState& st, const Action& action_kw, const Episode& ep,
                const std::vector<ChargerSpec>& chargers, const AssignmentPolicy& policy,
                std::mt19937_64& rng) {
    require(!st.done, "transition: episode already finished");
    require(action_kw.size() == chargers.size(), "transition: action length != charger count");
    for (double p : action_kw)
        if (!std::isfinite(p)) throw NumericError("transition: non-finite action");

    double total = st.building_kw;
    for (double p : action_kw) total += p;
    st.estimated_peak_kw = std::max(st.estimated_peak_kw, total);

    for (size_t c = 0; c < chargers.size(); ++c) {
        int v = st.occupancy[c];
        if (v < 0) continue;
        st.session_soc[v] = soc_step(st.session_soc[v], action_kw[c], ep.tariff.delta_h,
                                     ep.sessions[v].capacity_kwh);
    }

    int prev_day = st.slot / ep.tariff.slots_per_day();
    ++st.slot;
    if (st.slot >= ep.n_slots) {
        st.done = true;
        for (auto& o : st.occupancy) o = -1;
        std::fill(st.energy_need_kwh.begin(), st.energy_need_kwh.end(), 0.0);
        std::fill(st.remaining_slots.begin(), st.remaining_slots.end(), 0);
        st.waiting.clear();
        st.building_kw = 0;
        return;
    }
    int day = st.slot / ep.tariff.slots_per_day();
    if (day != prev_day && !st.history_window.empty()) {
        st.history_window.erase(st.history_window.begin());
        st.history_window.push_back(day_building_peak(ep, prev_day));
    }
    settle_slot(st, ep, chargers, policy, rng);
}

MaskInputs mask_inputs_of(const SimState& state, const std::vector<ChargerSpec>& chargers,
                          const Tariff& tariff, double estimated_peak_override) {
    long n = static_cast<long>(chargers.size());
    MaskInputs in;
    in.energy_need_kwh = Eigen::Map<const Eigen::VectorXd>(state.energy_need_kwh.data(), n);
    in.remaining_slots.resize(n);
    in.c_max_kw.resize(n);
    in.c_min_kw.resize(n);
    for (long c = 0; c < n; ++c) {
        in.remaining_slots[c] = state.remaining_slots[c];
        in.c_max_kw[c] = chargers[c].p_max_kw;
        in.c_min_kw[c] = chargers[c].p_min_kw;
    }
    in.building_kw = state.building_kw;
    in.estimated_peak_kw =
        estimated_peak_override >= 0 ? estimated_peak_override : state.estimated_peak_kw;
    in.delta_h = tariff.delta_h;
    return in;
}

SocClipInputs soc_clip_inputs_of(const SimState& state, const std::vector<ChargerSpec>& chargers,
                                 const Episode& episode) {
    long n = static_cast<long>(chargers.size());
    SocClipInputs in;
    in.soc = Eigen::VectorXd::Zero(n);
    in.capacity_kwh = Eigen::VectorXd::Zero(n);
    in.soc_min = Eigen::VectorXd::Zero(n);
    in.soc_max = Eigen::VectorXd::Ones(n);
    in.occupied.assign(n, 0);
    in.delta_h = episode.tariff.delta_h;
    for (long c = 0; c < n; ++c) {
        int v = state.occupancy[c];
        if (v < 0) continue;
        const auto& s = episode.sessions[v];
        in.occupied[c] = 1;
        in.soc[c] = state.session_soc[v];
        in.capacity_kwh[c] = s.capacity_kwh;
        in.soc_min[c] = s.soc_min;
        in.soc_max[c] = s.soc_max;
    }
    return in;
}

Action finalize_action(const SimState& state, const std::vector<ChargerSpec>& chargers,
                       const Episode& episode, const Action& action_kw) {
    Action a = post_process_soc(soc_clip_inputs_of(state, chargers, episode), action_kw);
    return enforce_building_floor(state.building_kw, a);
}

RolloutResult rollout(const std::vector<ChargerSpec>& chargers, const Episode& episode,
                      const PolicyFn& policy, const RolloutOptions& opts) {
    require(static_cast<bool>(policy), "rollout: policy required");
    std::mt19937_64 rng(opts.seed);
    SimState st = init_state(chargers, episode, opts.assignment, rng);
    RolloutResult out;
    out.schedule.reserve(episode.n_slots);
    bool featurized = opts.record_trajectory;
    NormConstants norm = opts.norm;
    if (featurized) norm.validate();

    while (!st.done) {
        bool use_override =
            opts.offpeak_override &&
            (!episode.is_weekday_slot(st.slot) || !episode.tariff.is_peak_slot(st.slot));
        Action a = use_override ? opts.offpeak_override(st) : policy(st);
        require(a.size() == chargers.size(), "rollout: policy returned wrong action length");

        StepRecord rec;
        if (featurized) rec.features = featurize(st, norm);
        double r = opts.reward_fn ? opts.reward_fn(st, a) : 0.0;
        out.total_reward += r;
        out.schedule.push_back(a);
        transition(st, a, episode, chargers, opts.assignment, rng);
        if (featurized) {
            rec.action_kw = out.schedule.back();
            rec.reward = r;
            rec.next_features = st.done ? Eigen::VectorXd::Zero(kFeatureDim) : featurize(st, norm);
            rec.done = st.done;
            rec.overridden = use_override;
            out.trajectory.push_back(std::move(rec));
        }
    }
    out.final_socs = st.session_soc;
    out.waiting_slot_count = st.waiting_slot_count;
    out.bill = compute_bill(episode.tariff, episode.building_kw, out.schedule, episode.sessions,
                            out.final_socs);
    return out;
}

}  // namespace v2b
