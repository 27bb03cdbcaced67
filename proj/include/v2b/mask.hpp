#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "v2b/core.hpp"

namespace v2b {

// Per-slot context the mask needs.  All vectors have one entry per charger;
// idle chargers carry energy_need = 0 and remaining_slots = 0.  A charger is
// treated as bidirectional iff c_min_kw < 0.
struct MaskInputs {
    Eigen::VectorXd energy_need_kwh;  // (soc_req - soc) * capacity, 0 when idle
    Eigen::VectorXd remaining_slots;  // slots until departure, 0 when idle
    Eigen::VectorXd c_max_kw;
    Eigen::VectorXd c_min_kw;
    double building_kw = 0;
    double estimated_peak_kw = 0;
    double delta_h = 0.25;
    double epsilon = 1e-5;

    void validate() const;  // throws ConfigError
};

struct MaskResult {
    Eigen::VectorXd action;
    Eigen::MatrixXd jacobian;      // d masked / d raw; empty unless requested
    std::vector<uint8_t> pattern;  // active-branch fingerprint, for kink detection
};

// The six-stage mask.  Stages, in order:
//   1 idle gating          a <- tau/(tau+eps) * a
//   2 need cap (uni only)  a <- min(a, E/delta)
//   3 forced charge        a <- max(a, min((E - relu(tau-1)*c_max*delta)/delta, c_max))
//   4 forced discharge cap a <- min(a, max((E - relu(tau-1)*c_min*delta)/delta, c_min)) (bi only)
//   5 gap filling          proportional boost of charge headroom toward (peak_est - building)
//   6 building protection  proportional shrink of discharge so building + sum(a) >= 0
// Every stage is piecewise linear, so the Jacobian is exact away from kinks.
// relu(tau-1) in stages 3-4 keeps idle chargers (tau = 0, E = 0) pinned at 0.
MaskResult mask_action(const MaskInputs& in, const Eigen::VectorXd& raw,
                       bool with_jacobian = false);

// Convenience wrapper on std::vector actions, value only.
Action mask_action(const MaskInputs& in, const Action& raw);

// Stages 3-4 only: the repair applied to heuristic outputs so every policy
// meets departure targets the same way.
Action apply_forced(const MaskInputs& in, const Action& raw);

// Clip so the next-slot SoC stays inside [soc_min, soc_max]; applied outside
// the differentiable path.  Idle chargers pass through.
struct SocClipInputs {
    Eigen::VectorXd soc;           // current SoC per charger (0 when idle)
    Eigen::VectorXd capacity_kwh;  // connected vehicle's capacity (0 when idle)
    Eigen::VectorXd soc_min;
    Eigen::VectorXd soc_max;
    std::vector<uint8_t> occupied;
    double delta_h = 0.25;
};

Action post_process_soc(const SocClipInputs& in, const Action& action);

// Exact building-import repair: scales discharge down so building + sum >= 0.
// The SoC clip can undo stage 6 (a clipped charge no longer offsets a
// discharge), so the acting pipeline runs this last, outside the gradient.
Action enforce_building_floor(double building_kw, const Action& action);

}  // namespace v2b
