#include "v2b/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "v2b/common.hpp"

namespace v2b::heuristics {

double laxity_hours(int remaining_slots, double energy_need_kwh, double p_max_kw,
                    double delta_h) {
    return remaining_slots * delta_h - energy_need_kwh / p_max_kw;
}

namespace {

struct Slot {
    int charger;
    int session;
    double need_kwh;   // signed: negative when above target
    int remaining;
    double trickle_kw;  // need spread over the remaining window, clipped to bounds
    double laxity_h;
    int departure;
};

std::vector<Slot> occupied_slots(const SimState& st, const std::vector<ChargerSpec>& chargers,
                                 const Episode& episode) {
    std::vector<Slot> out;
    const double delta = episode.tariff.delta_h;
    for (size_t i = 0; i < chargers.size(); ++i) {
        int s = st.occupancy[i];
        if (s < 0 || st.remaining_slots[i] <= 0) continue;
        Slot o;
        o.charger = static_cast<int>(i);
        o.session = s;
        o.need_kwh = st.energy_need_kwh[i];
        o.remaining = st.remaining_slots[i];
        o.trickle_kw = std::clamp(o.need_kwh / (o.remaining * delta), chargers[i].p_min_kw,
                                  chargers[i].p_max_kw);
        o.laxity_h = laxity_hours(o.remaining, o.need_kwh, chargers[i].p_max_kw, delta);
        o.departure = episode.sessions[s].departure_slot;
        out.push_back(o);
    }
    return out;
}

// Stable sorts keep ascending charger index as the tie-break.
void by_laxity(std::vector<Slot>& v, bool reverse) {
    std::stable_sort(v.begin(), v.end(), [reverse](const Slot& a, const Slot& b) {
        return reverse ? a.laxity_h > b.laxity_h : a.laxity_h < b.laxity_h;
    });
}

void by_departure(std::vector<Slot>& v, bool reverse) {
    std::stable_sort(v.begin(), v.end(), [reverse](const Slot& a, const Slot& b) {
        return reverse ? a.departure > b.departure : a.departure < b.departure;
    });
}

// Shared loop for the trickle-capped variants: walk the given order handing
// each charger its trickle rate, capped by whatever power gap is left.
Action gap_capped_trickle(const std::vector<Slot>& order, const SimState& st,
                          size_t n_chargers) {
    Action a(n_chargers, 0.0);
    double gap = st.estimated_peak_kw - st.building_kw;
    for (const Slot& o : order) {
        if (gap <= 0) break;
        double p = std::min(o.trickle_kw, gap);
        a[o.charger] = p;
        gap -= p;
    }
    return a;
}

}  // namespace

Action full_charge(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode) {
    Action a(chargers.size(), 0.0);
    for (const Slot& o : occupied_slots(st, chargers, episode)) {
        const EvSession& v = episode.sessions[o.session];
        if (st.session_soc[o.session] < v.soc_max) a[o.charger] = chargers[o.charger].p_max_kw;
    }
    return a;
}

Action trickle(const SimState& st, const std::vector<ChargerSpec>& chargers,
               const Episode& episode) {
    Action a(chargers.size(), 0.0);
    for (const Slot& o : occupied_slots(st, chargers, episode)) a[o.charger] = o.trickle_kw;
    return a;
}

Action trickle_llf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode) {
    auto order = occupied_slots(st, chargers, episode);
    by_laxity(order, /*reverse=*/false);
    return gap_capped_trickle(order, st, chargers.size());
}

Action trickle_edf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                   const Episode& episode) {
    auto order = occupied_slots(st, chargers, episode);
    by_departure(order, /*reverse=*/false);
    return gap_capped_trickle(order, st, chargers.size());
}

namespace {

// Charge-first family.  Two regimes around S = sum of trickle rates vs. the
// power gap:
//   * spare gap: everyone trickles, then bidirectional EVs (most slack first)
//     absorb the surplus up to their top-balance rate;
//   * tight gap: bidirectional EVs sitting above their target discharge (most
//     slack first) until the widened gap covers S, then needs are handed out
//     gap-capped in the same order.
// Budget bookkeeping follows the reference procedure: the absorb loop debits
// the full per-charger power after S was already debited, so the running gap
// is a conservative estimate rather than an exact balance.
Action charge_first(const SimState& st, const std::vector<ChargerSpec>& chargers,
                    const Episode& episode, bool order_by_departure) {
    auto order = occupied_slots(st, chargers, episode);
    if (order_by_departure)
        by_departure(order, /*reverse=*/true);
    else
        by_laxity(order, /*reverse=*/true);

    const double delta = episode.tariff.delta_h;
    Action a(chargers.size(), 0.0);
    double gap = st.estimated_peak_kw - st.building_kw;
    double trickle_sum = 0;
    for (const Slot& o : order) trickle_sum += o.trickle_kw;

    if (trickle_sum < gap) {
        for (const Slot& o : order) a[o.charger] = o.trickle_kw;
        gap -= trickle_sum;
        for (const Slot& o : order) {
            if (chargers[o.charger].p_min_kw >= 0) continue;
            const EvSession& v = episode.sessions[o.session];
            double absorb_rate = (v.soc_max - st.session_soc[o.session]) * v.capacity_kwh / delta;
            double p = std::min({chargers[o.charger].p_max_kw, absorb_rate, gap});
            if (p <= a[o.charger]) continue;  // never lower an EV below its trickle
            a[o.charger] = p;
            gap -= p;
        }
        return a;
    }

    for (const Slot& o : order) {
        if (gap >= trickle_sum) break;
        if (chargers[o.charger].p_min_kw >= 0) continue;
        const EvSession& v = episode.sessions[o.session];
        if (st.session_soc[o.session] <= v.soc_req) continue;
        double p = std::max(chargers[o.charger].p_min_kw, o.need_kwh / delta);
        a[o.charger] = p;
        gap -= p;
    }
    for (const Slot& o : order) {
        double p = std::min(o.trickle_kw, std::max(gap, 0.0));
        a[o.charger] = p;
        gap -= p;
    }
    return a;
}

}  // namespace

Action charge_first_llf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                        const Episode& episode) {
    return charge_first(st, chargers, episode, /*order_by_departure=*/false);
}

Action charge_first_edf(const SimState& st, const std::vector<ChargerSpec>& chargers,
                        const Episode& episode) {
    return charge_first(st, chargers, episode, /*order_by_departure=*/true);
}

const std::vector<std::string>& policy_names() {
    static const std::vector<std::string> names = {"fc",    "trickle", "t-llf",
                                                   "t-edf", "cf-llf",  "cf-edf"};
    return names;
}

PolicyFn make_policy(const std::string& name, const Episode& episode,
                     const std::vector<ChargerSpec>& chargers, bool repair) {
    Action (*fn)(const SimState&, const std::vector<ChargerSpec>&, const Episode&) = nullptr;
    if (name == "fc")
        fn = full_charge;
    else if (name == "trickle")
        fn = trickle;
    else if (name == "t-llf")
        fn = trickle_llf;
    else if (name == "t-edf")
        fn = trickle_edf;
    else if (name == "cf-llf")
        fn = charge_first_llf;
    else if (name == "cf-edf")
        fn = charge_first_edf;
    else
        throw ConfigError("unknown policy: " + name);

    auto ep = std::make_shared<const Episode>(episode);
    auto ch = std::make_shared<const std::vector<ChargerSpec>>(chargers);
    return [fn, ep, ch, repair](const SimState& st) {
        Action a = fn(st, *ch, *ep);
        if (repair) {
            a = apply_forced(mask_inputs_of(st, *ch, ep->tariff), a);
            a = finalize_action(st, *ch, *ep, a);
        }
        return a;
    };
}

}  // namespace v2b::heuristics
