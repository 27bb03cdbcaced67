#include "v2b/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "v2b/common.hpp"

namespace v2b::oracle {

double weighted_objective(const BillBreakdown& bill, const Weights& w) {
    return w.energy * bill.energy_usd + w.demand * bill.demand_usd +
           w.missing * bill.missing_soc_kwh;
}

namespace {

bool demand_eligible(const Tariff& t, int slot) {
    return !t.demand_peak_hours_only || t.is_peak_slot(slot);
}

double demand_price(const Tariff& t) {
    return t.theta_d * (t.demand_includes_delta ? t.delta_h : 1.0);
}

double implied_lo(const lp::LinearProgram& p,
                  const std::vector<std::pair<int, double>>& terms) {
    double v = -1.0;
    for (auto [j, a] : terms) v += a > 0 ? a * p.lo[j] : a * p.hi[j];
    return v;
}

double implied_hi(const lp::LinearProgram& p,
                  const std::vector<std::pair<int, double>>& terms) {
    double v = 1.0;
    for (auto [j, a] : terms) v += a > 0 ? a * p.hi[j] : a * p.lo[j];
    return v;
}

}  // namespace

BuiltLp build_lp(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                 const std::vector<std::vector<int>>& occupancy, const Weights& weights,
                 const BuildOptions& opts) {
    const Tariff& tf = episode.tariff;
    const int n = episode.n_slots;
    const int start = opts.start_slot;
    const int end = opts.end_slot < 0 ? n : opts.end_slot;
    if (start < 0 || start > end || end > n)
        throw ConfigError("build_lp: slot range out of bounds");
    if (occupancy.size() != static_cast<size_t>(n))
        throw ConfigError("build_lp: occupancy length mismatch");

    BuiltLp out;
    lp::LinearProgram& p = out.problem;
    const size_t n_sessions = episode.sessions.size();

    std::vector<double> soc0(n_sessions);
    for (size_t v = 0; v < n_sessions; ++v)
        soc0[v] = opts.socs ? (*opts.socs)[v] : episode.sessions[v].soc_init;

    // power columns, slot-major so each session's columns are in time order
    std::vector<std::vector<int>> session_cols(n_sessions);
    std::vector<std::vector<int>> slot_cols(n);
    for (int j = start; j < end; ++j) {
        for (size_t i = 0; i < chargers.size(); ++i) {
            int v = occupancy[j][i];
            if (v < 0) continue;
            int col = p.add_var(chargers[i].p_min_kw, chargers[i].p_max_kw,
                                weights.energy * tf.delta_h * energy_rate(tf, j));
            out.index.power.push_back({static_cast<int>(i), j, v});
            session_cols[v].push_back(col);
            slot_cols[j].push_back(col);
        }
    }

    // peak variable: floored by building-only eligible slots (and the caller's
    // sunk peak), capped by everything charging at once
    const bool capped = opts.peak_cap_kw >= 0;
    double floor_kw = std::max(0.0, opts.peak_floor_kw);
    double ceil_kw = floor_kw;
    for (int j = start; j < end; ++j) {
        if (!demand_eligible(tf, j)) continue;
        double pmax_sum = 0;
        for (int col : slot_cols[j]) pmax_sum += p.hi[col];
        if (slot_cols[j].empty()) floor_kw = std::max(floor_kw, episode.building_kw[j]);
        ceil_kw = std::max(ceil_kw, episode.building_kw[j] + pmax_sum);
    }
    if (!capped)
        out.index.peak_var = p.add_var(floor_kw, std::max(floor_kw, ceil_kw),
                                       weights.demand * demand_price(tf));

    for (int j = start; j < end; ++j) {
        if (slot_cols[j].empty()) {
            // nothing to decide; a cap below the bare building load is hopeless
            if (capped && demand_eligible(tf, j) &&
                episode.building_kw[j] > opts.peak_cap_kw + 1e-9)
                p.add_row({}, 1.0, 1.0);
            continue;
        }
        std::vector<std::pair<int, double>> terms;
        for (int col : slot_cols[j]) terms.push_back({col, 1.0});

        if (demand_eligible(tf, j)) {  // net draw cannot exceed the peak
            auto cap_terms = terms;
            double hi;
            if (capped) {
                hi = opts.peak_cap_kw - episode.building_kw[j];
            } else {
                cap_terms.push_back({out.index.peak_var, -1.0});
                hi = -episode.building_kw[j];
            }
            double lo = implied_lo(p, cap_terms);
            p.add_row(std::move(cap_terms), std::min(lo, hi), hi);
            out.index.cap_rows.push_back(p.n_rows() - 1);
        }
        // no exporting past the building's own draw
        double lo = -episode.building_kw[j];
        double hi = std::max(lo, implied_hi(p, terms));
        p.add_row(std::move(terms), lo, hi);
    }

    out.index.slack_var.assign(n_sessions, -1);
    for (size_t v = 0; v < n_sessions; ++v) {
        const EvSession& s = episode.sessions[v];
        if (session_cols[v].empty()) {
            if (opts.include_constants && s.departure_slot > start && s.arrival_slot < end)
                out.fixed_missing_kwh +=
                    std::max(0.0, s.soc_req - soc0[v]) * s.capacity_kwh;
            continue;
        }
        const double capd = s.capacity_kwh / tf.delta_h;  // kW per unit SoC per slot
        std::vector<std::pair<int, double>> prefix;
        for (int col : session_cols[v]) {
            prefix.push_back({col, 1.0});
            p.add_row(prefix, (s.soc_min - soc0[v]) * capd, (s.soc_max - soc0[v]) * capd);
        }
        int m = p.add_var(0.0, std::max(0.0, s.soc_req - s.soc_min),
                          weights.missing * s.capacity_kwh);
        out.index.slack_var[v] = m;
        prefix.push_back({m, capd});
        double lo = (s.soc_req - soc0[v]) * capd;
        double hi = std::max(lo, implied_hi(p, prefix));
        p.add_row(std::move(prefix), lo, hi);
    }

    if (opts.include_constants) {
        for (int j = start; j < end; ++j)
            p.constant +=
                weights.energy * episode.building_kw[j] * tf.delta_h * energy_rate(tf, j);
        p.constant += weights.missing * out.fixed_missing_kwh;
    }
    return out;
}

namespace {

// Day-boundary cuts that no session straddles; straddled days merge.
std::vector<std::pair<int, int>> block_ranges(const Episode& episode, int start) {
    const int spd = episode.tariff.slots_per_day();
    std::vector<int> cuts = {start};
    for (int c = (start / spd + 1) * spd; c < episode.n_slots; c += spd) {
        bool clean = true;
        for (const EvSession& s : episode.sessions)
            if (s.arrival_slot < c && s.departure_slot > c) {
                clean = false;
                break;
            }
        if (clean) cuts.push_back(c);
    }
    cuts.push_back(episode.n_slots);
    std::vector<std::pair<int, int>> blocks;
    for (size_t k = 0; k + 1 < cuts.size(); ++k)
        if (cuts[k] < cuts[k + 1]) blocks.push_back({cuts[k], cuts[k + 1]});
    return blocks;
}

bool slot_occupied(const std::vector<std::vector<int>>& occ, int slot) {
    for (int v : occ[slot])
        if (v >= 0) return true;
    return false;
}

void extract_schedule(const BuiltLp& built, const std::vector<double>& x,
                      const std::vector<ChargerSpec>& chargers, Schedule& schedule) {
    for (size_t k = 0; k < built.index.power.size(); ++k) {
        const auto& pv = built.index.power[k];
        double val = std::clamp(x[k], chargers[pv.charger].p_min_kw,
                                chargers[pv.charger].p_max_kw);
        schedule[pv.slot][pv.charger] = std::abs(val) < 1e-11 ? 0.0 : val;
    }
}

OracleSolution solve_direct(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                            const std::vector<std::vector<int>>& occ, const Weights& weights,
                            int start, const std::vector<double>* socs, double floor_kw) {
    BuildOptions bo;
    bo.start_slot = start;
    bo.socs = socs;
    bo.peak_floor_kw = floor_kw;
    BuiltLp built = build_lp(episode, chargers, occ, weights, bo);
    lp::Solution ls = lp::solve(built.problem);

    OracleSolution out;
    out.status = ls.status;
    out.iterations = ls.iterations;
    if (ls.status != lp::Status::Optimal) return out;
    out.objective = ls.objective;
    out.schedule.assign(episode.n_slots, Action(chargers.size(), 0.0));
    extract_schedule(built, ls.x, chargers, out.schedule);
    out.peak_kw = built.index.peak_var >= 0 ? ls.x[built.index.peak_var] : 0.0;
    out.missing_soc.assign(episode.sessions.size(), 0.0);
    for (size_t v = 0; v < episode.sessions.size(); ++v) {
        int m = built.index.slack_var[v];
        if (m >= 0)
            out.missing_soc[v] = std::max(0.0, ls.x[m]);
        else if (episode.sessions[v].departure_slot > start) {
            double s0 = socs ? (*socs)[v] : episode.sessions[v].soc_init;
            out.missing_soc[v] = std::max(0.0, episode.sessions[v].soc_req - s0);
        }
    }
    return out;
}

struct BlockLp {
    BuiltLp built;
    std::vector<double> cap_base;  // row hi = cap_base + peak cap
};

OracleSolution solve_decomposed(const Episode& episode,
                                const std::vector<ChargerSpec>& chargers,
                                const std::vector<std::vector<int>>& occ,
                                const Weights& weights, int start,
                                const std::vector<double>* socs, double floor_kw,
                                const std::vector<std::pair<int, int>>& blocks) {
    const Tariff& tf = episode.tariff;
    const int n = episode.n_slots;

    double q_lo = std::max(0.0, floor_kw);
    double q_hi = q_lo;
    for (int j = start; j < n; ++j) {
        if (!demand_eligible(tf, j)) continue;
        double b = episode.building_kw[j];
        if (!slot_occupied(occ, j)) {
            q_lo = std::max(q_lo, b);
        } else {
            double pmax_sum = 0;
            for (size_t i = 0; i < chargers.size(); ++i)
                if (occ[j][i] >= 0) pmax_sum += chargers[i].p_max_kw;
            q_hi = std::max(q_hi, b + pmax_sum);
        }
    }
    q_hi = std::max(q_hi, q_lo) + 1.0;

    double constant = 0;
    for (int j = start; j < n; ++j)
        constant += weights.energy * episode.building_kw[j] * tf.delta_h * energy_rate(tf, j);
    std::vector<double> fixed_missing(episode.sessions.size(), 0.0);
    for (size_t v = 0; v < episode.sessions.size(); ++v) {
        const EvSession& s = episode.sessions[v];
        if (s.departure_slot <= start) continue;
        bool assigned = false;
        for (int j = std::max(start, s.arrival_slot); j < s.departure_slot && !assigned; ++j)
            for (size_t i = 0; i < chargers.size() && !assigned; ++i)
                assigned = occ[j][i] == static_cast<int>(v);
        if (!assigned) {
            double s0 = socs ? (*socs)[v] : s.soc_init;
            fixed_missing[v] = std::max(0.0, s.soc_req - s0);
            constant += weights.missing * fixed_missing[v] * s.capacity_kwh;
        }
    }

    std::vector<BlockLp> subs;
    for (auto [bs, be] : blocks) {
        bool any = false;
        for (int j = bs; j < be && !any; ++j) any = slot_occupied(occ, j);
        if (!any) continue;
        BlockLp sub;
        BuildOptions bo;
        bo.start_slot = bs;
        bo.end_slot = be;
        bo.socs = socs;
        bo.peak_cap_kw = q_hi;
        bo.include_constants = false;
        sub.built = build_lp(episode, chargers, occ, weights, bo);
        for (int r : sub.built.index.cap_rows)
            sub.cap_base.push_back(sub.built.problem.rows[r].hi - q_hi);
        subs.push_back(std::move(sub));
    }

    OracleSolution out;
    std::vector<lp::Solution> best(subs.size());
    const double dprice = weights.demand * demand_price(tf);

    // g(q) = sum of block optima under peak cap q; F(q) = dprice*q + g(q) is
    // convex piecewise-linear, its slope read off the cap-row duals.  Keep hi
    // on the feasible, nonnegative-slope side and bisect.
    auto eval = [&](double q, std::vector<lp::Solution>& sols, double& slope) -> bool {
        slope = dprice;
        for (size_t k = 0; k < subs.size(); ++k) {
            auto& sub = subs[k];
            for (size_t c = 0; c < sub.cap_base.size(); ++c) {
                auto& row = sub.built.problem.rows[sub.built.index.cap_rows[c]];
                row.hi = sub.cap_base[c] + q;
                row.lo = std::min(row.lo, row.hi);
            }
            sols[k] = lp::solve(sub.built.problem);
            out.iterations += sols[k].iterations;
            if (sols[k].status != lp::Status::Optimal) return false;
            for (int r : sub.built.index.cap_rows) slope += sols[k].row_dual[r];
        }
        return true;
    };

    double slope = 0;
    if (!eval(q_hi, best, slope)) {
        out.status = lp::Status::Infeasible;  // cannot happen with vacuous caps
        return out;
    }
    std::vector<lp::Solution> work(subs.size());
    for (int it = 0; it < 120 && q_hi - q_lo > 1e-9 * (1.0 + q_hi); ++it) {
        double mid = 0.5 * (q_lo + q_hi);
        if (eval(mid, work, slope) && slope >= 0) {
            q_hi = mid;
            best.swap(work);
        } else {
            q_lo = mid;
        }
    }

    out.status = lp::Status::Optimal;
    out.schedule.assign(n, Action(chargers.size(), 0.0));
    out.missing_soc = fixed_missing;
    double var_part = 0;
    for (size_t k = 0; k < subs.size(); ++k) {
        extract_schedule(subs[k].built, best[k].x, chargers, out.schedule);
        var_part += best[k].objective;
        for (size_t v = 0; v < episode.sessions.size(); ++v) {
            int m = subs[k].built.index.slack_var[v];
            if (m >= 0) out.missing_soc[v] = std::max(0.0, best[k].x[m]);
        }
    }

    // settle the demand term on the schedule's realized peak (<= the cap)
    double realized = std::max(0.0, floor_kw);
    for (int j = start; j < n; ++j) {
        if (!demand_eligible(tf, j)) continue;
        double net = episode.building_kw[j];
        for (double a : out.schedule[j]) net += a;
        realized = std::max(realized, net);
    }
    out.peak_kw = realized;
    out.objective = constant + var_part + dprice * realized;
    return out;
}

OracleSolution solve_from(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                          const std::vector<std::vector<int>>& occ, const Weights& weights,
                          int start, const std::vector<double>* socs, double floor_kw) {
    auto blocks = block_ranges(episode, start);
    int var_blocks = 0;
    for (auto [bs, be] : blocks)
        for (int j = bs; j < be; ++j)
            if (slot_occupied(occ, j)) {
                ++var_blocks;
                break;
            }
    if (var_blocks <= 1)
        return solve_direct(episode, chargers, occ, weights, start, socs, floor_kw);
    return solve_decomposed(episode, chargers, occ, weights, start, socs, floor_kw, blocks);
}

}  // namespace

OracleSolution solve_episode(const Episode& episode, const std::vector<ChargerSpec>& chargers,
                             const AssignmentPolicy& assignment, const Weights& weights,
                             unsigned long long seed) {
    episode.validate();
    validate_chargers(chargers);
    auto occ = occupancy_timeline(chargers, episode, assignment.priority,
                                  assignment.tie_break, seed);
    OracleSolution out =
        solve_from(episode, chargers, occ, weights, 0, nullptr, /*floor=*/-1);
    if (out.status == lp::Status::Optimal) {
        auto socs = final_socs_of_schedule(chargers, episode, out.schedule, occ);
        out.bill = compute_bill(episode.tariff, episode.building_kw, out.schedule,
                                episode.sessions, socs);
    }
    return out;
}

Action guidance_action(const SimState& state, const Episode& episode,
                       const std::vector<ChargerSpec>& chargers,
                       const AssignmentPolicy& assignment, const Weights& weights,
                       unsigned long long seed) {
    if (state.done || state.slot >= episode.n_slots) return Action(chargers.size(), 0.0);
    auto occ = occupancy_timeline(chargers, episode, assignment.priority,
                                  assignment.tie_break, seed);
    OracleSolution sol = solve_from(episode, chargers, occ, weights, state.slot,
                                    &state.session_soc, state.estimated_peak_kw);
    if (sol.status != lp::Status::Optimal)
        throw NumericError(std::string("guidance solve ended ") + lp::to_string(sol.status));
    return sol.schedule[state.slot];
}

}  // namespace v2b::oracle
