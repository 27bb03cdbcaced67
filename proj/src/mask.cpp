#include "v2b/mask.hpp"

#include <algorithm>
#include <cmath>

namespace v2b {

namespace {

Eigen::VectorXd to_eigen(const Action& a) {
    return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<long>(a.size()));
}

Action to_action(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void MaskInputs::validate() const {
    long n = energy_need_kwh.size();
    if (n == 0 || remaining_slots.size() != n || c_max_kw.size() != n || c_min_kw.size() != n)
        throw ConfigError("mask: per-charger vectors must share a nonzero length");
    if (!(delta_h > 0 && delta_h <= 1.0) || !(epsilon > 0))
        throw ConfigError("mask: need 0 < delta_h <= 1 and epsilon > 0");
    if (!energy_need_kwh.allFinite() || !remaining_slots.allFinite() || !c_max_kw.allFinite() ||
        !c_min_kw.allFinite() || !std::isfinite(building_kw) || !std::isfinite(estimated_peak_kw))
        throw ConfigError("mask: non-finite input");
    for (long i = 0; i < n; ++i) {
        if (remaining_slots[i] < 0) throw ConfigError("mask: remaining_slots must be >= 0");
        if (!(c_min_kw[i] <= 0 && c_max_kw[i] > 0)) throw ConfigError("mask: need c_min <= 0 < c_max");
    }
}

MaskResult mask_action(const MaskInputs& in, const Eigen::VectorXd& raw, bool with_jacobian) {
    in.validate();
    long n = in.energy_need_kwh.size();
    if (raw.size() != n) throw ConfigError("mask: raw action length mismatch");
    if (!raw.allFinite()) throw ConfigError("mask: non-finite raw action");

    MaskResult out;
    Eigen::VectorXd a = raw;
    Eigen::MatrixXd J;
    if (with_jacobian) J = Eigen::MatrixXd::Identity(n, n);
    auto& pat = out.pattern;
    double delta = in.delta_h, eps = in.epsilon;

    // stage 1: idle gating
    for (long i = 0; i < n; ++i) {
        double g = in.remaining_slots[i] / (in.remaining_slots[i] + eps);
        a[i] *= g;
        if (with_jacobian) J.row(i) *= g;
    }

    // stage 2: unidirectional chargers never exceed the remaining need; the
    // cap is floored at 0 so an overcharged vehicle cannot drag a charger that
    // has no discharge capability below its 0 kW bound
    for (long i = 0; i < n; ++i) {
        if (in.c_min_kw[i] < 0) continue;
        double cap = std::max(in.energy_need_kwh[i], 0.0) / delta;
        bool clipped = a[i] > cap;
        pat.push_back(clipped);
        if (clipped) {
            a[i] = cap;
            if (with_jacobian) J.row(i).setZero();
        }
    }

    // stages 3-4: forced charge floor / forced discharge ceiling (constants in a)
    for (long i = 0; i < n; ++i) {
        double future = std::max(in.remaining_slots[i] - 1.0, 0.0);
        double floor_kw = std::min((in.energy_need_kwh[i] - future * in.c_max_kw[i] * delta) / delta,
                                   in.c_max_kw[i]);
        bool raised = a[i] < floor_kw;
        pat.push_back(raised);
        if (raised) {
            a[i] = floor_kw;
            if (with_jacobian) J.row(i).setZero();
        }
    }
    for (long i = 0; i < n; ++i) {
        if (in.c_min_kw[i] >= 0) continue;
        double future = std::max(in.remaining_slots[i] - 1.0, 0.0);
        double ceil_kw = std::max((in.energy_need_kwh[i] - future * in.c_min_kw[i] * delta) / delta,
                                  in.c_min_kw[i]);
        bool lowered = a[i] > ceil_kw;
        pat.push_back(lowered);
        if (lowered) {
            a[i] = ceil_kw;
            if (with_jacobian) J.row(i).setZero();
        }
    }

    // stage 5: push unused charge headroom toward the predicted-peak gap
    {
        Eigen::VectorXd can(n);
        Eigen::MatrixXd Jc;
        if (with_jacobian) Jc = Eigen::MatrixXd::Zero(n, n);
        for (long i = 0; i < n; ++i) {
            double cap = std::min(in.energy_need_kwh[i] / delta, in.c_max_kw[i]);
            double c = cap - a[i];
            bool active = c > 0;
            pat.push_back(active);
            can[i] = active ? c : 0.0;
            if (active && with_jacobian) Jc.row(i) = -J.row(i);
        }
        double sum_can = can.sum();
        double gap_short = (in.estimated_peak_kw - in.building_kw) - a.sum();
        bool relu_active = gap_short > 0;
        double r = relu_active ? gap_short : 0.0;
        bool capped = sum_can < r;
        double t = capped ? sum_can : r;
        pat.push_back(relu_active);
        pat.push_back(capped);
        if (t > 0) {
            double denom = sum_can + eps;
            Eigen::VectorXd share = can / denom;
            if (with_jacobian) {
                Eigen::RowVectorXd d_sum_can = Eigen::RowVectorXd::Zero(n);
                for (long i = 0; i < n; ++i) d_sum_can += Jc.row(i);
                Eigen::RowVectorXd dt;
                if (capped) {
                    dt = d_sum_can;
                } else if (relu_active) {
                    Eigen::RowVectorXd d_sum_a = Eigen::RowVectorXd::Zero(n);
                    for (long i = 0; i < n; ++i) d_sum_a += J.row(i);
                    dt = -d_sum_a;
                } else {
                    dt = Eigen::RowVectorXd::Zero(n);
                }
                J += share * dt + (t / denom) * Jc - (t / (denom * denom)) * (can * d_sum_can);
            }
            a += t * share;
        }
    }

    // stage 6: scale discharge back so the building never exports
    {
        Eigen::VectorXd neg(n);
        Eigen::MatrixXd Jn;
        if (with_jacobian) Jn = Eigen::MatrixXd::Zero(n, n);
        for (long i = 0; i < n; ++i) {
            bool active = a[i] < 0;
            pat.push_back(active);
            neg[i] = active ? a[i] : 0.0;
            if (active && with_jacobian) Jn.row(i) = J.row(i);
        }
        double sum_neg = neg.sum();
        double t = -in.building_kw - a.sum();
        bool active = t > 0;
        pat.push_back(active);
        // |sum_neg| >= t - building, so a vanishing denominator implies the
        // correction itself is O(eps); skip rather than divide by ~0.
        if (active && std::abs(sum_neg + eps) > 1e-12) {
            double denom = sum_neg + eps;
            Eigen::VectorXd share = neg / denom;
            if (with_jacobian) {
                Eigen::RowVectorXd d_sum_neg = Eigen::RowVectorXd::Zero(n);
                for (long i = 0; i < n; ++i) d_sum_neg += Jn.row(i);
                Eigen::RowVectorXd d_sum_a = Eigen::RowVectorXd::Zero(n);
                for (long i = 0; i < n; ++i) d_sum_a += J.row(i);
                Eigen::RowVectorXd dt = -d_sum_a;
                J += share * dt + (t / denom) * Jn - (t / (denom * denom)) * (neg * d_sum_neg);
            }
            a += t * share;
        }
    }

    out.action = std::move(a);
    if (with_jacobian) out.jacobian = std::move(J);
    return out;
}

Action mask_action(const MaskInputs& in, const Action& raw) {
    return to_action(mask_action(in, to_eigen(raw), false).action);
}

Action apply_forced(const MaskInputs& in, const Action& raw) {
    in.validate();
    long n = in.energy_need_kwh.size();
    if (static_cast<long>(raw.size()) != n) throw ConfigError("mask: raw action length mismatch");
    Action a = raw;
    double delta = in.delta_h;
    for (long i = 0; i < n; ++i) {
        double future = std::max(in.remaining_slots[i] - 1.0, 0.0);
        double floor_kw = std::min((in.energy_need_kwh[i] - future * in.c_max_kw[i] * delta) / delta,
                                   in.c_max_kw[i]);
        a[i] = std::max(a[i], floor_kw);
        if (in.c_min_kw[i] < 0) {
            double ceil_kw = std::max((in.energy_need_kwh[i] - future * in.c_min_kw[i] * delta) / delta,
                                      in.c_min_kw[i]);
            a[i] = std::min(a[i], ceil_kw);
        }
    }
    return a;
}

Action enforce_building_floor(double building_kw, const Action& action) {
    double pos = 0, neg = 0;
    for (double p : action) (p >= 0 ? pos : neg) += p;
    if (building_kw + pos + neg >= 0 || neg >= 0) return action;
    double f = std::clamp((building_kw + pos) / -neg, 0.0, 1.0);
    Action out = action;
    for (double& p : out)
        if (p < 0) p *= f;
    return out;
}

Action post_process_soc(const SocClipInputs& in, const Action& action) {
    long n = in.soc.size();
    if (in.capacity_kwh.size() != n || in.soc_min.size() != n || in.soc_max.size() != n ||
        static_cast<long>(in.occupied.size()) != n || static_cast<long>(action.size()) != n)
        throw ConfigError("post_process_soc: length mismatch");
    if (!(in.delta_h > 0 && in.delta_h <= 1.0)) throw ConfigError("post_process_soc: bad delta_h");
    Action out = action;
    for (long i = 0; i < n; ++i) {
        if (!in.occupied[i]) continue;
        double lo = (in.soc_min[i] - in.soc[i]) * in.capacity_kwh[i] / in.delta_h;
        double hi = (in.soc_max[i] - in.soc[i]) * in.capacity_kwh[i] / in.delta_h;
        out[i] = std::clamp(out[i], lo, hi);
    }
    return out;
}

}  // namespace v2b
