#pragma once

#include <vector>

#include "v2b/core.hpp"
#include "v2b/lp.hpp"
#include "v2b/sim.hpp"

namespace v2b::oracle {

// Objective weights: unmet-energy slack, energy cost, demand charge.
struct Weights {
    double missing = 1.0;
    double energy = 1.0;
    double demand = 3.0;
};

// lambda-weighted realized objective of a schedule's bill; the quantity the
// solver bounds from below.
double weighted_objective(const BillBreakdown& bill, const Weights& w = {});

// Mapping from LP columns back to the schedule.
struct LpIndex {
    struct PowerVar {
        int charger;
        int slot;
        int session;
    };
    std::vector<PowerVar> power;  // LP variables [0, power.size())
    int peak_var = -1;            // -1 in capped mode
    std::vector<int> slack_var;   // per session, -1 when the session has no columns
    std::vector<int> cap_rows;    // rows limiting draw to the peak cap
};

struct BuiltLp {
    lp::LinearProgram problem;
    LpIndex index;
    double fixed_missing_kwh = 0;  // sessions that never reach a charger
};

struct BuildOptions {
    int start_slot = 0;
    int end_slot = -1;                         // -1: episode end
    const std::vector<double>* socs = nullptr; // current SoCs; default soc_init
    double peak_floor_kw = -1;                 // extra lower bound on the peak
    double peak_cap_kw = -1;                   // >=0: fixed cap, no peak variable
    bool include_constants = true;             // building energy + fixed missing
};

// Assemble the slot-resolved program for a known episode under a fixed
// connection timeline.
BuiltLp build_lp(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                 const std::vector<std::vector<int>>& occupancy, const Weights& weights = {},
                 const BuildOptions& opts = {});

struct OracleSolution {
    lp::Status status = lp::Status::IterationLimit;
    Schedule schedule;                // full horizon, zero outside decided slots
    double objective = 0;             // weighted, constants included
    double peak_kw = 0;
    std::vector<double> missing_soc;  // per session, SoC units
    int iterations = 0;
    BillBreakdown bill;               // filled by solve_episode
};

// Full-information optimum for an episode.  Single-day horizons solve one
// program with the peak as a variable; longer horizons split into day blocks
// coupled only by the shared peak, located by bisection on its subgradient.
OracleSolution solve_episode(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                             const AssignmentPolicy& assignment = {},
                             const Weights& weights = {}, unsigned long long seed = 0);

// Optimum of the remaining horizon given the live state; returns the
// current-slot action.  Assignment parameters must match the rollout's.
Action guidance_action(const SimState& state, const Episode& episode,
                       const std::vector<ChargerSpec>& chargers,
                       const AssignmentPolicy& assignment = {}, const Weights& weights = {},
                       unsigned long long seed = 0);

}  // namespace v2b::oracle
