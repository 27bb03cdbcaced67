#include "v2b/core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace v2b {

namespace {

bool finite(double x) { return std::isfinite(x); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

int Tariff::slots_per_day() const {
    return static_cast<int>(std::lround(24.0 / delta_h));
}

int Tariff::hour_of_slot(int slot) const {
    int hour = static_cast<int>(std::floor(slot * delta_h));
    return ((hour % 24) + 24) % 24;
}

bool Tariff::is_peak_slot(int slot) const {
    int hour = hour_of_slot(slot);
    return hour >= peak_start_hour && hour < peak_end_hour;
}

void Tariff::validate() const {
    require(finite(theta_e_offpeak) && theta_e_offpeak >= 0, "tariff: off-peak rate must be finite and >= 0");
    require(finite(theta_e_peak) && theta_e_peak >= 0, "tariff: peak rate must be finite and >= 0");
    require(finite(theta_d) && theta_d >= 0, "tariff: demand price must be finite and >= 0");
    require(finite(delta_h) && delta_h > 0 && delta_h <= 1.0, "tariff: delta_h must lie in (0, 1]");
    double spd = 24.0 / delta_h;
    require(std::abs(spd - std::lround(spd)) < 1e-9, "tariff: delta_h must divide 24 hours evenly");
    require(peak_start_hour >= 0 && peak_end_hour <= 24 && peak_start_hour < peak_end_hour,
            "tariff: peak window must satisfy 0 <= start < end <= 24");
}

double energy_rate(const Tariff& tariff, int slot) {
    require(slot >= 0, "energy_rate: slot must be >= 0");
    return tariff.is_peak_slot(slot) ? tariff.theta_e_peak : tariff.theta_e_offpeak;
}

void validate_chargers(const std::vector<ChargerSpec>& chargers) {
    require(!chargers.empty(), "chargers: at least one charger required");
    for (size_t i = 0; i < chargers.size(); ++i) {
        const auto& c = chargers[i];
        require(c.id == static_cast<int>(i), "chargers: ids must equal vector positions");
        require(finite(c.p_min_kw) && finite(c.p_max_kw), "chargers: bounds must be finite");
        require(c.p_min_kw <= 0 && c.p_max_kw > 0, "chargers: need p_min <= 0 < p_max");
    }
}

int Episode::n_days() const {
    int spd = tariff.slots_per_day();
    return (n_slots + spd - 1) / spd;
}

bool Episode::is_weekday_slot(int slot) const {
    int day = slot / tariff.slots_per_day();
    return day_of_week.at(day) < 5;
}

void Episode::validate() const {
    tariff.validate();
    require(n_slots > 0, "episode: n_slots must be > 0");
    require(static_cast<int>(building_kw.size()) == n_slots, "episode: building load length != n_slots");
    for (double b : building_kw)
        require(finite(b) && b >= 0, "episode: building load must be finite and >= 0");
    require(static_cast<int>(day_of_week.size()) == n_days(), "episode: day_of_week needs one entry per day");
    for (int d : day_of_week)
        require(d >= 0 && d <= 6, "episode: day_of_week entries must lie in 0..6");
    require(finite(estimated_peak_kw) && estimated_peak_kw >= 0, "episode: estimated peak must be finite and >= 0");
    require(history_peaks_kw.size() == 7, "episode: history_peaks_kw must hold 7 values");
    for (double p : history_peaks_kw)
        require(finite(p) && p >= 0, "episode: history peaks must be finite and >= 0");
    for (size_t v = 0; v < sessions.size(); ++v) {
        const auto& s = sessions[v];
        std::string tag = "session " + std::to_string(v) + ": ";
        require(s.id == static_cast<int>(v), tag + "id must equal vector position");
        require(s.arrival_slot >= 0 && s.arrival_slot < s.departure_slot && s.departure_slot <= n_slots,
                tag + "need 0 <= arrival < departure <= n_slots");
        require(finite(s.capacity_kwh) && s.capacity_kwh > 0, tag + "capacity must be > 0");
        require(0 <= s.soc_min && s.soc_min <= s.soc_init && s.soc_init <= s.soc_max && s.soc_max <= 1,
                tag + "need 0 <= soc_min <= soc_init <= soc_max <= 1");
        require(s.soc_min <= s.soc_req && s.soc_req <= s.soc_max,
                tag + "need soc_min <= soc_req <= soc_max");
    }
}

double soc_step(double soc, double power_kw, double delta_h, double capacity_kwh) {
    require(finite(soc) && finite(power_kw), "soc_step: soc and power must be finite");
    require(finite(delta_h) && delta_h > 0 && delta_h <= 1.0, "soc_step: delta_h must lie in (0, 1]");
    require(finite(capacity_kwh) && capacity_kwh > 0, "soc_step: capacity must be > 0");
    return soc + power_kw * delta_h / capacity_kwh;
}

BillBreakdown compute_bill(const Tariff& tariff,
                           const std::vector<double>& building_kw,
                           const Schedule& schedule,
                           const std::vector<EvSession>& sessions,
                           const std::vector<double>& final_socs) {
    tariff.validate();
    int n = static_cast<int>(building_kw.size());
    require(static_cast<int>(schedule.size()) == n, "compute_bill: schedule length != building load length");
    require(final_socs.size() == sessions.size(), "compute_bill: one final SoC per session required");
    size_t width = schedule.empty() ? 0 : schedule.front().size();

    std::vector<int> bad_slots;
    std::vector<double> total(n, 0.0);
    for (int j = 0; j < n; ++j) {
        require(schedule[j].size() == width, "compute_bill: ragged schedule");
        double sum = building_kw[j];
        for (double p : schedule[j]) {
            require(finite(p), "compute_bill: schedule contains non-finite power");
            sum += p;
        }
        total[j] = sum;
        if (sum < -1e-9) bad_slots.push_back(j);
    }
    if (!bad_slots.empty()) {
        std::ostringstream oss;
        oss << "compute_bill: negative total draw at slot";
        if (bad_slots.size() > 1) oss << "s";
        for (int j : bad_slots) oss << " " << j;
        throw FeasibilityError(oss.str());
    }

    BillBreakdown bill;
    for (int j = 0; j < n; ++j) {
        bill.energy_usd += total[j] * energy_rate(tariff, j) * tariff.delta_h;
        bool eligible = !tariff.demand_peak_hours_only || tariff.is_peak_slot(j);
        if (eligible) bill.peak_kw = std::max(bill.peak_kw, total[j]);
    }
    bill.demand_usd = tariff.theta_d * bill.peak_kw * (tariff.demand_includes_delta ? tariff.delta_h : 1.0);
    bill.total_usd = bill.energy_usd + bill.demand_usd;
    for (size_t v = 0; v < sessions.size(); ++v)
        bill.missing_soc_kwh += std::max(0.0, sessions[v].soc_req - final_socs[v]) * sessions[v].capacity_kwh;
    return bill;
}

BillBreakdown building_only_bill(const Tariff& tariff, const std::vector<double>& building_kw) {
    Schedule zero(building_kw.size());
    return compute_bill(tariff, building_kw, zero, {}, {});
}

std::string to_string(Violation::Kind kind) {
    switch (kind) {
        case Violation::Kind::ChargerBound: return "charger_bound";
        case Violation::Kind::SocMin: return "soc_min";
        case Violation::Kind::SocMax: return "soc_max";
        case Violation::Kind::BuildingPower: return "building_power";
    }
    return "?";
}

std::vector<std::vector<int>> occupancy_timeline(const std::vector<ChargerSpec>& chargers,
                                                 const Episode& episode, PriorityClass priority,
                                                 TieBreak tie_break, unsigned long long seed) {
    validate_chargers(chargers);
    episode.validate();
    int n_chargers = static_cast<int>(chargers.size());
    std::mt19937_64 rng(seed);

    // arrival order: FIFO by arrival slot, simultaneous arrivals by tie_break
    std::vector<int> order(episode.sessions.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return episode.sessions[a].arrival_slot < episode.sessions[b].arrival_slot;
    });
    for (size_t lo = 0; lo < order.size();) {
        size_t hi = lo + 1;
        int slot = episode.sessions[order[lo]].arrival_slot;
        while (hi < order.size() && episode.sessions[order[hi]].arrival_slot == slot) ++hi;
        auto first = order.begin() + lo, last = order.begin() + hi;
        switch (tie_break) {
            case TieBreak::Departure:
                std::stable_sort(first, last, [&](int a, int b) {
                    return episode.sessions[a].departure_slot > episode.sessions[b].departure_slot;
                });
                break;
            case TieBreak::Capacity:
                std::stable_sort(first, last, [&](int a, int b) {
                    return episode.sessions[a].capacity_kwh > episode.sessions[b].capacity_kwh;
                });
                break;
            case TieBreak::RandomOrder:
                std::shuffle(first, last, rng);
                break;
        }
        lo = hi;
    }

    auto pick_charger = [&](const std::vector<int>& occ) -> int {
        std::vector<int> idle;
        for (int c = 0; c < n_chargers; ++c)
            if (occ[c] < 0) idle.push_back(c);
        if (idle.empty()) return -1;
        switch (priority) {
            case PriorityClass::BidirectionalFirst:
                for (int c : idle) if (chargers[c].bidirectional()) return c;
                return idle.front();
            case PriorityClass::UnidirectionalFirst:
                for (int c : idle) if (!chargers[c].bidirectional()) return c;
                return idle.front();
            case PriorityClass::RandomCharger: {
                std::uniform_int_distribution<size_t> pick(0, idle.size() - 1);
                return idle[pick(rng)];
            }
        }
        return -1;
    };

    std::vector<std::vector<int>> occupancy(episode.n_slots, std::vector<int>(n_chargers, -1));
    std::vector<int> occ(n_chargers, -1);
    std::deque<int> waiting;
    size_t next_arrival = 0;
    for (int slot = 0; slot < episode.n_slots; ++slot) {
        for (int c = 0; c < n_chargers; ++c)
            if (occ[c] >= 0 && episode.sessions[occ[c]].departure_slot <= slot) occ[c] = -1;
        while (next_arrival < order.size() &&
               episode.sessions[order[next_arrival]].arrival_slot <= slot)
            waiting.push_back(order[next_arrival++]);
        std::erase_if(waiting, [&](int v) { return episode.sessions[v].departure_slot <= slot; });
        while (!waiting.empty()) {
            int c = pick_charger(occ);
            if (c < 0) break;
            occ[c] = waiting.front();
            waiting.pop_front();
        }
        occupancy[slot] = occ;
    }
    return occupancy;
}

std::vector<double> final_socs_of_schedule(const std::vector<ChargerSpec>& chargers,
                                           const Episode& episode, const Schedule& schedule,
                                           const std::vector<std::vector<int>>& occupancy) {
    require(schedule.size() == occupancy.size() &&
                static_cast<int>(schedule.size()) == episode.n_slots,
            "final_socs_of_schedule: schedule/occupancy length mismatch");
    std::vector<double> soc(episode.sessions.size());
    for (size_t v = 0; v < soc.size(); ++v) soc[v] = episode.sessions[v].soc_init;
    for (int j = 0; j < episode.n_slots; ++j) {
        for (size_t c = 0; c < chargers.size(); ++c) {
            int v = occupancy[j][c];
            if (v < 0) continue;
            soc[v] = soc_step(soc[v], schedule[j].at(c), episode.tariff.delta_h,
                              episode.sessions[v].capacity_kwh);
        }
    }
    return soc;
}

std::vector<Violation> check_feasibility(const std::vector<ChargerSpec>& chargers,
                                         const Episode& episode, const Schedule& schedule,
                                         const std::vector<std::vector<int>>* occupancy,
                                         double tol) {
    validate_chargers(chargers);
    episode.validate();
    require(static_cast<int>(schedule.size()) == episode.n_slots,
            "check_feasibility: schedule length != n_slots");
    std::vector<std::vector<int>> computed;
    if (!occupancy) {
        computed = occupancy_timeline(chargers, episode);
        occupancy = &computed;
    }

    std::vector<Violation> out;
    std::vector<double> soc(episode.sessions.size());
    for (size_t v = 0; v < soc.size(); ++v) soc[v] = episode.sessions[v].soc_init;

    for (int j = 0; j < episode.n_slots; ++j) {
        require(schedule[j].size() == chargers.size(), "check_feasibility: ragged schedule");
        double total = episode.building_kw[j];
        for (size_t c = 0; c < chargers.size(); ++c) {
            double p = schedule[j][c];
            total += p;
            if (p < chargers[c].p_min_kw - tol)
                out.push_back({Violation::Kind::ChargerBound, j, chargers[c].id, p, chargers[c].p_min_kw});
            else if (p > chargers[c].p_max_kw + tol)
                out.push_back({Violation::Kind::ChargerBound, j, chargers[c].id, p, chargers[c].p_max_kw});
            int v = (*occupancy)[j][c];
            if (v < 0) continue;
            const auto& s = episode.sessions[v];
            soc[v] = soc_step(soc[v], p, episode.tariff.delta_h, s.capacity_kwh);
            if (soc[v] < s.soc_min - tol)
                out.push_back({Violation::Kind::SocMin, j, s.id, soc[v], s.soc_min});
            else if (soc[v] > s.soc_max + tol)
                out.push_back({Violation::Kind::SocMax, j, s.id, soc[v], s.soc_max});
        }
        if (total < -tol)
            out.push_back({Violation::Kind::BuildingPower, j, -1, total, 0.0});
    }
    return out;
}

}  // namespace v2b
