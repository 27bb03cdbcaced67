#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "v2b/core.hpp"
#include "v2b/mask.hpp"

namespace v2b {

struct AssignmentPolicy {
    PriorityClass priority = PriorityClass::BidirectionalFirst;
    TieBreak tie_break = TieBreak::Departure;
};

// Controller-visible state at one slot.
struct SimState {
    int slot = 0;
    bool done = false;
    double building_kw = 0;
    double estimated_peak_kw = 0;  // running max of estimate and realized draw
    int day_of_week = 0;
    int arrivals_so_far = 0;
    int waiting_slot_count = 0;  // (session, slot) pairs spent in the queue
    std::vector<int> occupancy;            // session index per charger, -1 idle
    std::vector<double> energy_need_kwh;   // (soc_req - soc) * capacity, 0 idle
    std::vector<int> remaining_slots;      // departure - slot, 0 idle
    std::vector<double> session_soc;       // per session, frozen after departure
    std::deque<int> pending;               // future arrivals in service order
    std::deque<int> waiting;               // arrived, not yet assigned (FIFO)
    std::vector<double> history_window;    // last 7 daily building peaks

    double history_mean() const;
    double history_var() const;  // population variance
};

// Scale factors for feature normalization, taken from training data.
struct NormConstants {
    double max_building_kw = 1;
    double max_capacity_kwh = 1;
    int slots_per_day = 96;
    int max_window_slots = 96;  // longest stay used to scale remaining_slots
    double max_arrivals = 1;

    void validate() const;
    static NormConstants from_episodes(const std::vector<Episode>& episodes,
                                       const std::vector<ChargerSpec>& chargers);
};

// 7 globals + 15 energy-need slots + 15 remaining-slot slots; sites with fewer
// chargers pad with zeros.
constexpr int kChargerFeatureSlots = 15;
constexpr int kFeatureDim = 7 + 2 * kChargerFeatureSlots;

Eigen::VectorXd featurize(const SimState& state, const NormConstants& norm);

SimState init_state(const std::vector<ChargerSpec>& chargers, const Episode& episode,
                    const AssignmentPolicy& policy, std::mt19937_64& rng);

// One step: (1) fold realized draw into the peak estimate, (2) advance SoCs,
// (3) release departures then assign arrivals, (4) refresh per-charger needs,
// (5) load the next slot's exogenous data.  The action must already be
// masked/clipped; this routine applies no repair.
void transition(SimState& state, const Action& action_kw, const Episode& episode,
                const std::vector<ChargerSpec>& chargers, const AssignmentPolicy& policy,
                std::mt19937_64& rng);

// Mask/clip inputs corresponding to a state.
MaskInputs mask_inputs_of(const SimState& state, const std::vector<ChargerSpec>& chargers,
                          const Tariff& tariff, double estimated_peak_override = -1);
SocClipInputs soc_clip_inputs_of(const SimState& state,
                                 const std::vector<ChargerSpec>& chargers,
                                 const Episode& episode);

// SoC clip + exact building floor; the non-differentiable tail of the acting
// pipeline shared by every policy.
Action finalize_action(const SimState& state, const std::vector<ChargerSpec>& chargers,
                       const Episode& episode, const Action& action_kw);

using PolicyFn = std::function<Action(const SimState&)>;
using RewardFn = std::function<double(const SimState&, const Action&)>;

struct StepRecord {
    Eigen::VectorXd features;
    Action action_kw;
    double reward = 0;
    Eigen::VectorXd next_features;
    bool done = false;
    bool overridden = false;  // taken by the off-peak/weekend override
};

struct RolloutOptions {
    AssignmentPolicy assignment;
    NormConstants norm;
    unsigned long long seed = 0;
    PolicyFn offpeak_override;  // if set: acts on weekends and off-peak slots
    RewardFn reward_fn;         // optional; rewards default to 0
    bool record_trajectory = false;
};

struct RolloutResult {
    std::vector<StepRecord> trajectory;  // only when record_trajectory
    Schedule schedule;
    BillBreakdown bill;
    std::vector<double> final_socs;
    double total_reward = 0;
    int waiting_slot_count = 0;
};

RolloutResult rollout(const std::vector<ChargerSpec>& chargers, const Episode& episode,
                      const PolicyFn& policy, const RolloutOptions& opts);

}  // namespace v2b
