#pragma once

#include <string>
#include <vector>

#include "v2b/sim.hpp"

namespace v2b::heuristics {

// Raw per-slot actions; no departure repair, no SoC clip.  Idle chargers get 0.
Action full_charge(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode);
Action trickle(const SimState& st, const std::vector<ChargerSpec>& chargers,
               const Episode& episode);
Action trickle_llf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode);
Action trickle_edf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode);
Action charge_first_llf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                        const Episode& episode);
Action charge_first_edf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                        const Episode& episode);

// Stable CLI identifiers.
const std::vector<std::string>& policy_names();

// Policy closure.  With repair (the default used in benchmarks) the raw action
// passes through the forced charge/discharge stages and the SoC/building
// finalizer so every policy meets departure targets under the same rules.
PolicyFn make_policy(const std::string& name, const Episode& episode,
                     const std::vector<ChargerSpec>& chargers, bool repair = true);

// Slack before a session becomes urgent, in hours.
double laxity_hours(int remaining_slots, double energy_need_kwh, double c_max_kw,
                    double delta_h);

}  // namespace v2b::heuristics
