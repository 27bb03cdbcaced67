#pragma once

#include <string>
#include <vector>

#include "v2b/common.hpp"

namespace v2b {

// Time-of-use tariff plus billing conventions.  Slots are delta_h hours long,
// slot 0 starts at midnight of day 0.
struct Tariff {
    double theta_e_offpeak = 0.11271;  // $/kWh
    double theta_e_peak = 0.1466;      // $/kWh
    int peak_start_hour = 6;           // peak window [start, end), wall-clock hours
    int peak_end_hour = 22;
    double theta_d = 9.62;     // $/kW demand price
    double delta_h = 0.25;     // slot length in hours
    bool demand_includes_delta = true;   // demand charge = theta_d * peak * delta_h
    bool demand_peak_hours_only = true;  // only peak-hour slots can set the billed peak

    int slots_per_day() const;
    int hour_of_slot(int slot) const;  // wall-clock hour, floor(slot*delta) mod 24
    bool is_peak_slot(int slot) const;
    void validate() const;  // throws ConfigError
};

// $/kWh applicable to energy drawn in `slot`.
double energy_rate(const Tariff& tariff, int slot);

struct ChargerSpec {
    int id = 0;
    double p_min_kw = 0;  // <= 0; negative means the charger can discharge
    double p_max_kw = 0;  // > 0

    bool bidirectional() const { return p_min_kw < 0; }
};

void validate_chargers(const std::vector<ChargerSpec>& chargers);

// One EV visit.  The vehicle is connected during [arrival_slot, departure_slot)
// and must reach soc_req by departure.
struct EvSession {
    int id = 0;
    int arrival_slot = 0;
    int departure_slot = 0;
    double soc_init = 0;
    double soc_req = 0;
    double soc_min = 0.0;
    double soc_max = 0.9;
    double capacity_kwh = 0;
};

// A billing-period instance: building load, EV sessions, tariff, and the peak
// estimate / history context the controller sees.
struct Episode {
    int n_slots = 0;
    std::vector<double> building_kw;      // length n_slots
    std::vector<EvSession> sessions;      // ids must equal vector positions
    std::vector<int> day_of_week;         // per day, 0=Mon .. 6=Sun
    Tariff tariff;
    double estimated_peak_kw = 0;         // demand target the controller works against
    std::vector<double> history_peaks_kw; // daily building peaks of the 7 preceding days

    int n_days() const;
    bool is_weekday_slot(int slot) const;
    void validate() const;  // throws ConfigError
};

using Action = std::vector<double>;     // kW per charger, one slot
using Schedule = std::vector<Action>;   // n_slots x n_chargers

struct BillBreakdown {
    double energy_usd = 0;
    double demand_usd = 0;
    double total_usd = 0;       // energy + demand
    double peak_kw = 0;         // max total draw over demand-eligible slots
    double missing_soc_kwh = 0; // sum over sessions of unmet requested energy
};

// soc' = soc + power*delta/capacity.  No clipping; callers enforce the box.
double soc_step(double soc, double power_kw, double delta_h, double capacity_kwh);

// Bill a full schedule.  `final_socs[v]` is session v's SoC at departure.
// Throws FeasibilityError when any slot's total draw is negative, listing the
// offending slots.
BillBreakdown compute_bill(const Tariff& tariff,
                           const std::vector<double>& building_kw,
                           const Schedule& schedule,
                           const std::vector<EvSession>& sessions,
                           const std::vector<double>& final_socs);

// Bill with no chargers active and no sessions.
BillBreakdown building_only_bill(const Tariff& tariff,
                                 const std::vector<double>& building_kw);

struct Violation {
    enum class Kind { ChargerBound, SocMin, SocMax, BuildingPower };
    Kind kind;
    int slot = 0;
    int index = 0;  // charger id for bounds, session id for SoC
    double value = 0;
    double bound = 0;
};

std::string to_string(Violation::Kind kind);

// How an idle charger is picked for the head of the waiting queue.
enum class PriorityClass { BidirectionalFirst, UnidirectionalFirst, RandomCharger };
// Order among EVs arriving in the same slot.
enum class TieBreak { Departure, Capacity, RandomOrder };

// Connection timeline under FIFO assignment; powers never influence it.
// occupancy[slot][charger] = session index or -1.
std::vector<std::vector<int>> occupancy_timeline(
    const std::vector<ChargerSpec>& chargers, const Episode& episode,
    PriorityClass priority = PriorityClass::BidirectionalFirst,
    TieBreak tie_break = TieBreak::Departure, unsigned long long seed = 0);

// Check charger bounds, the SoC box along the implied SoC trajectories, and
// the building import limit.
std::vector<Violation> check_feasibility(
    const std::vector<ChargerSpec>& chargers, const Episode& episode,
    const Schedule& schedule,
    const std::vector<std::vector<int>>* occupancy = nullptr, double tol = 1e-9);

// Final SoC per session (soc_init where never connected) implied by the
// schedule under the given occupancy.
std::vector<double> final_socs_of_schedule(
    const std::vector<ChargerSpec>& chargers, const Episode& episode,
    const Schedule& schedule, const std::vector<std::vector<int>>& occupancy);

}  // namespace v2b
