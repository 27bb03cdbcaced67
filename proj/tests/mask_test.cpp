#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "v2b/mask.hpp"

using namespace v2b;

namespace {

// one bidirectional + two unidirectional chargers, all idle by default
MaskInputs tri_site() {
    MaskInputs in;
    in.energy_need_kwh = Eigen::VectorXd::Zero(3);
    in.remaining_slots = Eigen::VectorXd::Zero(3);
    in.c_max_kw = Eigen::VectorXd::Constant(3, 20.0);
    in.c_min_kw = Eigen::VectorXd::Zero(3);
    in.c_min_kw[0] = -20.0;
    in.building_kw = 100.0;
    in.estimated_peak_kw = 0.0;  // gap negative: stage 5 stays quiet
    return in;
}

Eigen::VectorXd vec3(double a, double b, double c) {
    Eigen::VectorXd v(3);
    v << a, b, c;
    return v;
}

}  // namespace

TEST_CASE("stage 1 zeroes idle chargers exactly and barely shrinks live ones") {
    auto in = tri_site();
    in.remaining_slots = vec3(0, 4, 0);
    auto res = mask_action(in, vec3(10.0, -0.0, 0.0), false);
    CHECK(res.action[0] == 0.0);

    // live bidirectional charger keeps (almost) its raw action
    in = tri_site();
    in.c_min_kw = vec3(-20, -20, -20);
    in.remaining_slots = vec3(0, 4, 0);
    auto res2 = mask_action(in, vec3(10.0, -5.0, 3.0), false);
    CHECK(res2.action[0] == 0.0);
    CHECK(res2.action[2] == 0.0);
    CHECK(res2.action[1] == doctest::Approx(-5.0 * (4.0 / 4.00001)).epsilon(1e-12));
    CHECK(res2.action[1] > -5.0);
}

TEST_CASE("stage 2 caps a unidirectional charger at its remaining need") {
    auto in = tri_site();
    in.energy_need_kwh = vec3(0, 2.0, 0);
    in.remaining_slots = vec3(0, 2, 0);
    auto res = mask_action(in, vec3(0, 15.0, 0), false);
    CHECK(res.action[1] == doctest::Approx(8.0).epsilon(1e-12));  // 2 kWh / 0.25 h
}

TEST_CASE("stage 2 never drags an overcharged unidirectional charger negative") {
    auto in = tri_site();
    in.energy_need_kwh = vec3(0, -4.0, 0);  // above requirement
    in.remaining_slots = vec3(0, 3, 0);
    auto res = mask_action(in, vec3(0, 12.0, 0), false);
    CHECK(res.action[1] == 0.0);
}

TEST_CASE("stage 3 forces the charge needed to still make the departure target") {
    auto in = tri_site();
    in.energy_need_kwh = vec3(0, 10.0, 0);
    in.remaining_slots = vec3(0, 2, 0);
    // (10 - 1*20*0.25) / 0.25 = 20 kW now, else the target is unreachable
    auto res = mask_action(in, vec3(0, 0, 0), false);
    CHECK(res.action[1] == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("stage 4 forces discharge when a bidirectional vehicle sits above target") {
    auto in = tri_site();
    in.energy_need_kwh = vec3(-8.0, 0, 0);
    in.remaining_slots = vec3(1, 0, 0);  // last slot
    auto res = mask_action(in, vec3(0, 0, 0), false);
    CHECK(res.action[0] == doctest::Approx(-20.0).epsilon(1e-12));  // max(-32, -20)
}

TEST_CASE("stage 5 spreads the peak-estimate gap over charge headroom") {
    auto in = tri_site();
    in.energy_need_kwh = vec3(0, 8.0, 8.0);
    in.remaining_slots = vec3(0, 8, 8);
    in.building_kw = 100.0;
    in.estimated_peak_kw = 130.0;
    auto res = mask_action(in, vec3(0, 0, 0), false);
    // headroom min(8/0.25, 20) = 20 kW each; gap 30 split evenly
    CHECK(res.action[1] == doctest::Approx(15.0).epsilon(1e-4));
    CHECK(res.action[2] == doctest::Approx(15.0).epsilon(1e-4));
    CHECK(res.action.sum() == doctest::Approx(30.0).epsilon(1e-4));
    // never past the per-charger headroom even for a larger gap
    in.estimated_peak_kw = 200.0;
    auto res2 = mask_action(in, vec3(0, 0, 0), false);
    CHECK(res2.action[1] <= 20.0 + 1e-9);
    CHECK(res2.action.sum() == doctest::Approx(40.0).epsilon(1e-3));
}

TEST_CASE("stage 6 rescales discharge to protect the building import limit") {
    MaskInputs in;
    in.energy_need_kwh = vec3(-10.0, -10.0, 0);
    in.remaining_slots = vec3(8, 8, 0);
    in.c_max_kw = Eigen::VectorXd::Constant(3, 40.0);
    in.c_min_kw = vec3(-40, -40, 0);
    in.building_kw = 50.0;
    in.estimated_peak_kw = 0.0;
    auto res = mask_action(in, vec3(-35.0, -25.0, 0), false);
    CHECK(res.action.sum() == doctest::Approx(-50.0).epsilon(1e-5));
    CHECK(res.action[0] == doctest::Approx(-35.0 + 10.0 * 35.0 / 60.0).epsilon(1e-3));
    CHECK(res.action[1] == doctest::Approx(-25.0 + 10.0 * 25.0 / 60.0).epsilon(1e-3));
}

TEST_CASE("idle chargers end at exactly zero whatever the raw action") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 200; ++k) {
        MaskInputs in;
        int n = 4;
        in.energy_need_kwh = Eigen::VectorXd::Zero(n);
        in.remaining_slots = Eigen::VectorXd::Zero(n);
        in.c_max_kw = Eigen::VectorXd::Constant(n, 20.0);
        in.c_min_kw = Eigen::VectorXd::Zero(n);
        in.c_min_kw[0] = in.c_min_kw[1] = -20.0;
        in.building_kw = 200.0 * u(rng);
        in.estimated_peak_kw = 250.0 * u(rng);
        Eigen::VectorXd raw(n);
        std::vector<bool> idle(n);
        for (int i = 0; i < n; ++i) {
            idle[i] = u(rng) < 0.5;
            if (!idle[i]) {
                in.remaining_slots[i] = 1 + static_cast<int>(u(rng) * 8);
                in.energy_need_kwh[i] = (u(rng) * 2 - (in.c_min_kw[i] < 0 ? 1 : 0)) * 8.0;
            }
            raw[i] = in.c_min_kw[i] + u(rng) * (in.c_max_kw[i] - in.c_min_kw[i]);
        }
        auto res = mask_action(in, raw, false);
        for (int i = 0; i < n; ++i)
            if (idle[i]) CHECK(res.action[i] == 0.0);
    }
}

TEST_CASE("masked actions stay within charger bounds") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 500; ++k) {
        int n = 2 + static_cast<int>(u(rng) * 4);
        MaskInputs in;
        in.energy_need_kwh = Eigen::VectorXd::Zero(n);
        in.remaining_slots = Eigen::VectorXd::Zero(n);
        in.c_max_kw = Eigen::VectorXd::Constant(n, 20.0);
        in.c_min_kw = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd raw(n);
        for (int i = 0; i < n; ++i) {
            if (u(rng) < 0.5) in.c_min_kw[i] = -20.0;
            if (u(rng) < 0.8) {
                in.remaining_slots[i] = 1 + static_cast<int>(u(rng) * 12);
                // anything a legal state can produce, including above-target
                in.energy_need_kwh[i] = (2 * u(rng) - 1) * 0.9 * 40.0;
                double max_reach = in.remaining_slots[i] * 20.0 * 0.25;
                in.energy_need_kwh[i] = std::min(in.energy_need_kwh[i], max_reach);
            }
            raw[i] = in.c_min_kw[i] + u(rng) * (in.c_max_kw[i] - in.c_min_kw[i]);
        }
        in.building_kw = u(rng) * 150.0;
        in.estimated_peak_kw = u(rng) * 200.0;
        auto res = mask_action(in, raw, false);
        for (int i = 0; i < n; ++i) {
            CHECK(res.action[i] >= in.c_min_kw[i] - 1e-6);
            CHECK(res.action[i] <= in.c_max_kw[i] + 1e-6);
        }
    }
}

TEST_CASE("masking every slot walks a satisfiable session to its target") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0, 1);
    double delta = 0.25;
    for (int k = 0; k < 100; ++k) {
        double cap = u(rng) < 0.5 ? 40.0 : 62.0;
        bool bi = u(rng) < 0.5;
        int slots = 1 + static_cast<int>(u(rng) * 10);
        double soc = 0.1 + 0.5 * u(rng);
        // keep the target reachable: need <= slots * c_max * delta
        double max_gain = slots * 20.0 * delta / cap;
        double req = std::min(0.9, soc + u(rng) * max_gain);
        MaskInputs in;
        in.energy_need_kwh = Eigen::VectorXd::Zero(1);
        in.remaining_slots = Eigen::VectorXd::Zero(1);
        in.c_max_kw = Eigen::VectorXd::Constant(1, 20.0);
        in.c_min_kw = Eigen::VectorXd::Constant(1, bi ? -20.0 : 0.0);
        in.building_kw = 80.0;
        in.estimated_peak_kw = 0.0;
        for (int j = slots; j >= 1; --j) {
            in.remaining_slots[0] = j;
            in.energy_need_kwh[0] = (req - soc) * cap;
            Eigen::VectorXd raw(1);
            raw[0] = in.c_min_kw[0] + u(rng) * (in.c_max_kw[0] - in.c_min_kw[0]);
            auto res = mask_action(in, raw, false);
            soc += res.action[0] * delta / cap;
        }
        CHECK(soc >= req - 1e-9);
        CHECK(soc <= 0.9 + 1e-9);
    }
}

TEST_CASE("stages 1-4 are idempotent") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 100; ++k) {
        auto in = tri_site();
        in.estimated_peak_kw = 0.0;  // stage 5 off
        in.building_kw = 500.0;      // stage 6 off for bounded discharge
        in.c_min_kw = vec3(-20, 0, 0);
        Eigen::VectorXd raw(3);
        for (int i = 0; i < 3; ++i) {
            in.remaining_slots[i] = static_cast<int>(u(rng) * 6);
            in.energy_need_kwh[i] =
                in.remaining_slots[i] > 0 ? (2 * u(rng) - 1) * 10.0 : 0.0;
            raw[i] = in.c_min_kw[i] + u(rng) * (20.0 - in.c_min_kw[i]);
        }
        auto once = mask_action(in, raw, false);
        auto twice = mask_action(in, once.action, false);
        // the idle gate re-shrinks a live action by tau/(tau+eps) each pass,
        // so idempotence holds to O(eps/tau), not exactly
        for (int i = 0; i < 3; ++i)
            CHECK(twice.action[i] == doctest::Approx(once.action[i]).epsilon(2e-5));
    }
}

TEST_CASE("analytic Jacobian matches central differences away from kinks") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    int checked = 0, skipped = 0;
    for (int k = 0; k < 60; ++k) {
        int n = 3;
        MaskInputs in;
        in.energy_need_kwh = Eigen::VectorXd::Zero(n);
        in.remaining_slots = Eigen::VectorXd::Zero(n);
        in.c_max_kw = Eigen::VectorXd::Constant(n, 20.0);
        in.c_min_kw = vec3(-20, -20, 0);
        Eigen::VectorXd raw(n);
        for (int i = 0; i < n; ++i) {
            if (u(rng) < 0.75) {
                in.remaining_slots[i] = 1 + static_cast<int>(u(rng) * 8);
                in.energy_need_kwh[i] = (2 * u(rng) - 1) * 12.0;
            }
            raw[i] = in.c_min_kw[i] + u(rng) * (in.c_max_kw[i] - in.c_min_kw[i]);
        }
        in.building_kw = u(rng) * 120.0;
        in.estimated_peak_kw = u(rng) * 160.0;

        auto base = mask_action(in, raw, true);
        double h = 1e-6;
        for (int c = 0; c < n; ++c) {
            Eigen::VectorXd up = raw, dn = raw;
            up[c] += h;
            dn[c] -= h;
            auto rup = mask_action(in, up, false);
            auto rdn = mask_action(in, dn, false);
            if (rup.pattern != base.pattern || rdn.pattern != base.pattern) {
                ++skipped;  // straddles a kink; the derivative is one-sided there
                continue;
            }
            ++checked;
            Eigen::VectorXd fd = (rup.action - rdn.action) / (2 * h);
            for (int r = 0; r < n; ++r)
                CHECK(std::abs(fd[r] - base.jacobian(r, c)) <=
                      1e-6 * std::max(1.0, std::abs(base.jacobian(r, c))));
        }
    }
    CHECK(checked > 100);  // the kink filter must not eat the test
}

TEST_CASE("SoC post-processing clips to the battery box") {
    SocClipInputs in;
    in.soc = vec3(0.89, 0.0, 0.5);
    in.capacity_kwh = vec3(40, 40, 40);
    in.soc_min = Eigen::VectorXd::Zero(3);
    in.soc_max = Eigen::VectorXd::Constant(3, 0.9);
    in.occupied = {1, 1, 0};
    auto out = post_process_soc(in, {20.0, -10.0, 7.0});
    CHECK(out[0] == doctest::Approx(1.6).epsilon(1e-12));  // (0.9-0.89)*40/0.25
    CHECK(out[1] == 0.0);                                  // empty battery cannot discharge
    CHECK(out[2] == doctest::Approx(7.0));                 // idle charger untouched
}

TEST_CASE("building floor repair scales discharge exactly") {
    auto out = enforce_building_floor(10.0, {-15.0, 5.0, -10.0});
    // building 10 + 5 charge supports 15 kW discharge: factor 15/25
    CHECK(out[0] == doctest::Approx(-9.0));
    CHECK(out[1] == doctest::Approx(5.0));
    CHECK(out[2] == doctest::Approx(-6.0));
    CHECK(10.0 + out[0] + out[1] + out[2] == doctest::Approx(0.0));
    auto noop = enforce_building_floor(100.0, {-15.0, 5.0, -10.0});
    CHECK(noop[0] == -15.0);
}
