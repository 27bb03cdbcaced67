#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <optional>
#include <string>

#include "v2b/core.hpp"
#include "v2b/datagen.hpp"
#include "v2b/heuristics.hpp"
#include "v2b/mask.hpp"
#include "v2b/oracle.hpp"
#include "v2b/rl.hpp"
#include "v2b/sim.hpp"

namespace py = pybind11;
using namespace v2b;

namespace {

std::string bill_repr(const BillBreakdown& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "BillBreakdown(energy=%.4f, demand=%.4f, total=%.4f, peak_kw=%.3f, "
                  "missing_kwh=%.4f)",
                  b.energy_usd, b.demand_usd, b.total_usd, b.peak_kw, b.missing_soc_kwh);
    return buf;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "vehicle-to-building charging lab";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FeasibilityError>(m, "FeasibilityError");
    py::register_exception<NumericError>(m, "NumericError");

    // ------------------------------------------------------------- enums
    py::enum_<PriorityClass>(m, "PriorityClass")
        .value("BidirectionalFirst", PriorityClass::BidirectionalFirst)
        .value("UnidirectionalFirst", PriorityClass::UnidirectionalFirst)
        .value("RandomCharger", PriorityClass::RandomCharger);
    py::enum_<TieBreak>(m, "TieBreak")
        .value("Departure", TieBreak::Departure)
        .value("Capacity", TieBreak::Capacity)
        .value("RandomOrder", TieBreak::RandomOrder);
    py::enum_<lp::Status>(m, "LpStatus")
        .value("Optimal", lp::Status::Optimal)
        .value("Infeasible", lp::Status::Infeasible)
        .value("Unbounded", lp::Status::Unbounded)
        .value("IterationLimit", lp::Status::IterationLimit);

    // ----------------------------------------------------------- billing
    py::class_<Tariff>(m, "Tariff")
        .def(py::init<>())
        .def_readwrite("theta_e_offpeak", &Tariff::theta_e_offpeak)
        .def_readwrite("theta_e_peak", &Tariff::theta_e_peak)
        .def_readwrite("peak_start_hour", &Tariff::peak_start_hour)
        .def_readwrite("peak_end_hour", &Tariff::peak_end_hour)
        .def_readwrite("theta_d", &Tariff::theta_d)
        .def_readwrite("delta_h", &Tariff::delta_h)
        .def_readwrite("demand_includes_delta", &Tariff::demand_includes_delta)
        .def_readwrite("demand_peak_hours_only", &Tariff::demand_peak_hours_only)
        .def("slots_per_day", &Tariff::slots_per_day)
        .def("hour_of_slot", &Tariff::hour_of_slot, py::arg("slot"))
        .def("is_peak_slot", &Tariff::is_peak_slot, py::arg("slot"))
        .def("validate", &Tariff::validate);
    m.def("energy_rate", &energy_rate, py::arg("tariff"), py::arg("slot"));

    py::class_<ChargerSpec>(m, "ChargerSpec")
        .def(py::init([](int id, double p_min_kw, double p_max_kw) {
                 return ChargerSpec{id, p_min_kw, p_max_kw};
             }),
             py::arg("id"), py::arg("p_min_kw"), py::arg("p_max_kw"))
        .def_readwrite("id", &ChargerSpec::id)
        .def_readwrite("p_min_kw", &ChargerSpec::p_min_kw)
        .def_readwrite("p_max_kw", &ChargerSpec::p_max_kw)
        .def("bidirectional", &ChargerSpec::bidirectional);
    m.def("validate_chargers", &validate_chargers, py::arg("chargers"));

    py::class_<EvSession>(m, "EvSession")
        .def(py::init<>())
        .def_readwrite("id", &EvSession::id)
        .def_readwrite("arrival_slot", &EvSession::arrival_slot)
        .def_readwrite("departure_slot", &EvSession::departure_slot)
        .def_readwrite("soc_init", &EvSession::soc_init)
        .def_readwrite("soc_req", &EvSession::soc_req)
        .def_readwrite("soc_min", &EvSession::soc_min)
        .def_readwrite("soc_max", &EvSession::soc_max)
        .def_readwrite("capacity_kwh", &EvSession::capacity_kwh);

    py::class_<Episode>(m, "Episode")
        .def(py::init<>())
        .def_readwrite("n_slots", &Episode::n_slots)
        .def_readwrite("building_kw", &Episode::building_kw)
        .def_readwrite("sessions", &Episode::sessions)
        .def_readwrite("day_of_week", &Episode::day_of_week)
        .def_readwrite("tariff", &Episode::tariff)
        .def_readwrite("estimated_peak_kw", &Episode::estimated_peak_kw)
        .def_readwrite("history_peaks_kw", &Episode::history_peaks_kw)
        .def("n_days", &Episode::n_days)
        .def("is_weekday_slot", &Episode::is_weekday_slot, py::arg("slot"))
        .def("validate", &Episode::validate);

    py::class_<BillBreakdown>(m, "BillBreakdown")
        .def(py::init<>())
        .def_readwrite("energy_usd", &BillBreakdown::energy_usd)
        .def_readwrite("demand_usd", &BillBreakdown::demand_usd)
        .def_readwrite("total_usd", &BillBreakdown::total_usd)
        .def_readwrite("peak_kw", &BillBreakdown::peak_kw)
        .def_readwrite("missing_soc_kwh", &BillBreakdown::missing_soc_kwh)
        .def("__repr__", &bill_repr);

    m.def("soc_step", &soc_step, py::arg("soc"), py::arg("power_kw"), py::arg("delta_h"),
          py::arg("capacity_kwh"));
    m.def("compute_bill", &compute_bill, py::arg("tariff"), py::arg("building_kw"),
          py::arg("schedule"), py::arg("sessions"), py::arg("final_socs"));
    m.def("building_only_bill", &building_only_bill, py::arg("tariff"), py::arg("building_kw"));

    py::class_<Violation>(m, "Violation")
        .def_property_readonly("kind", [](const Violation& v) { return to_string(v.kind); })
        .def_readonly("slot", &Violation::slot)
        .def_readonly("index", &Violation::index)
        .def_readonly("value", &Violation::value)
        .def_readonly("bound", &Violation::bound)
        .def("__repr__", [](const Violation& v) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "Violation(%s, slot=%d, index=%d, value=%g, bound=%g)",
                          to_string(v.kind).c_str(), v.slot, v.index, v.value, v.bound);
            return std::string(buf);
        });

    m.def("occupancy_timeline", &occupancy_timeline, py::arg("chargers"), py::arg("episode"),
          py::arg("priority") = PriorityClass::BidirectionalFirst,
          py::arg("tie_break") = TieBreak::Departure, py::arg("seed") = 0);
    m.def(
        "check_feasibility",
        [](const std::vector<ChargerSpec>& chargers, const Episode& episode,
           const Schedule& schedule, std::optional<std::vector<std::vector<int>>> occupancy,
           double tol) {
            return check_feasibility(chargers, episode, schedule,
                                     occupancy ? &*occupancy : nullptr, tol);
        },
        py::arg("chargers"), py::arg("episode"), py::arg("schedule"),
        py::arg("occupancy") = std::nullopt, py::arg("tol") = 1e-9);
    m.def("final_socs_of_schedule", &final_socs_of_schedule, py::arg("chargers"),
          py::arg("episode"), py::arg("schedule"), py::arg("occupancy"));

    // -------------------------------------------------------------- mask
    py::class_<MaskInputs>(m, "MaskInputs")
        .def(py::init<>())
        .def_readwrite("energy_need_kwh", &MaskInputs::energy_need_kwh)
        .def_readwrite("remaining_slots", &MaskInputs::remaining_slots)
        .def_readwrite("c_max_kw", &MaskInputs::c_max_kw)
        .def_readwrite("c_min_kw", &MaskInputs::c_min_kw)
        .def_readwrite("building_kw", &MaskInputs::building_kw)
        .def_readwrite("estimated_peak_kw", &MaskInputs::estimated_peak_kw)
        .def_readwrite("delta_h", &MaskInputs::delta_h)
        .def_readwrite("epsilon", &MaskInputs::epsilon)
        .def("validate", &MaskInputs::validate);

    py::class_<MaskResult>(m, "MaskResult")
        .def_readonly("action", &MaskResult::action)
        .def_readonly("jacobian", &MaskResult::jacobian)
        .def_readonly("pattern", &MaskResult::pattern);

    m.def(
        "mask_action",
        [](const MaskInputs& in, const Eigen::VectorXd& raw, bool with_jacobian) {
            return mask_action(in, raw, with_jacobian);
        },
        py::arg("inputs"), py::arg("raw"), py::arg("with_jacobian") = false);
    m.def(
        "apply_forced",
        [](const MaskInputs& in, const Action& raw) { return apply_forced(in, raw); },
        py::arg("inputs"), py::arg("raw"));

    py::class_<SocClipInputs>(m, "SocClipInputs")
        .def(py::init<>())
        .def_readwrite("soc", &SocClipInputs::soc)
        .def_readwrite("capacity_kwh", &SocClipInputs::capacity_kwh)
        .def_readwrite("soc_min", &SocClipInputs::soc_min)
        .def_readwrite("soc_max", &SocClipInputs::soc_max)
        .def_readwrite("occupied", &SocClipInputs::occupied)
        .def_readwrite("delta_h", &SocClipInputs::delta_h);
    m.def("post_process_soc", &post_process_soc, py::arg("inputs"), py::arg("action"));
    m.def("enforce_building_floor", &enforce_building_floor, py::arg("building_kw"),
          py::arg("action"));

    // --------------------------------------------------------- simulator
    py::class_<AssignmentPolicy>(m, "AssignmentPolicy")
        .def(py::init<>())
        .def_readwrite("priority", &AssignmentPolicy::priority)
        .def_readwrite("tie_break", &AssignmentPolicy::tie_break);

    py::class_<SimState>(m, "SimState")
        .def_readonly("slot", &SimState::slot)
        .def_readonly("done", &SimState::done)
        .def_readonly("building_kw", &SimState::building_kw)
        .def_readonly("estimated_peak_kw", &SimState::estimated_peak_kw)
        .def_readonly("day_of_week", &SimState::day_of_week)
        .def_readonly("arrivals_so_far", &SimState::arrivals_so_far)
        .def_readonly("waiting_slot_count", &SimState::waiting_slot_count)
        .def_readonly("occupancy", &SimState::occupancy)
        .def_readonly("energy_need_kwh", &SimState::energy_need_kwh)
        .def_readonly("remaining_slots", &SimState::remaining_slots)
        .def_readonly("session_soc", &SimState::session_soc)
        .def_readonly("pending", &SimState::pending)
        .def_readonly("waiting", &SimState::waiting)
        .def_readonly("history_window", &SimState::history_window)
        .def("history_mean", &SimState::history_mean)
        .def("history_var", &SimState::history_var);

    py::class_<NormConstants>(m, "NormConstants")
        .def(py::init<>())
        .def_readwrite("max_building_kw", &NormConstants::max_building_kw)
        .def_readwrite("max_capacity_kwh", &NormConstants::max_capacity_kwh)
        .def_readwrite("slots_per_day", &NormConstants::slots_per_day)
        .def_readwrite("max_window_slots", &NormConstants::max_window_slots)
        .def_readwrite("max_arrivals", &NormConstants::max_arrivals)
        .def("validate", &NormConstants::validate)
        .def_static("from_episodes", &NormConstants::from_episodes, py::arg("episodes"),
                    py::arg("chargers"));

    m.attr("FEATURE_DIM") = kFeatureDim;
    m.attr("CHARGER_FEATURE_SLOTS") = kChargerFeatureSlots;
    m.def("featurize", &featurize, py::arg("state"), py::arg("norm"));
    m.def("mask_inputs_of", &mask_inputs_of, py::arg("state"), py::arg("chargers"),
          py::arg("tariff"), py::arg("estimated_peak_override") = -1);
    m.def("soc_clip_inputs_of", &soc_clip_inputs_of, py::arg("state"), py::arg("chargers"),
          py::arg("episode"));
    m.def("finalize_action", &finalize_action, py::arg("state"), py::arg("chargers"),
          py::arg("episode"), py::arg("action_kw"));

    py::class_<StepRecord>(m, "StepRecord")
        .def_readonly("features", &StepRecord::features)
        .def_readonly("action_kw", &StepRecord::action_kw)
        .def_readonly("reward", &StepRecord::reward)
        .def_readonly("next_features", &StepRecord::next_features)
        .def_readonly("done", &StepRecord::done)
        .def_readonly("overridden", &StepRecord::overridden);

    py::class_<RolloutResult>(m, "RolloutResult")
        .def_readonly("trajectory", &RolloutResult::trajectory)
        .def_readonly("schedule", &RolloutResult::schedule)
        .def_readonly("bill", &RolloutResult::bill)
        .def_readonly("final_socs", &RolloutResult::final_socs)
        .def_readonly("total_reward", &RolloutResult::total_reward)
        .def_readonly("waiting_slot_count", &RolloutResult::waiting_slot_count);

    // Policies are plain callables state -> kW per charger; a string picks a
    // named heuristic instead.
    m.def(
        "rollout",
        [](const std::vector<ChargerSpec>& chargers, const Episode& episode, py::object policy,
           const AssignmentPolicy& assignment, std::optional<NormConstants> norm,
           unsigned long long seed, bool record_trajectory) {
            RolloutOptions opts;
            opts.assignment = assignment;
            opts.norm = norm ? *norm : NormConstants::from_episodes({episode}, chargers);
            opts.seed = seed;
            opts.record_trajectory = record_trajectory;
            PolicyFn fn = py::isinstance<py::str>(policy)
                              ? heuristics::make_policy(policy.cast<std::string>(), episode,
                                                        chargers)
                              : policy.cast<PolicyFn>();
            return rollout(chargers, episode, fn, opts);
        },
        py::arg("chargers"), py::arg("episode"), py::arg("policy"),
        py::arg("assignment") = AssignmentPolicy{}, py::arg("norm") = std::nullopt,
        py::arg("seed") = 0, py::arg("record_trajectory") = false);

    // -------------------------------------------------------- heuristics
    m.def("policy_names", [] { return heuristics::policy_names(); });
    m.def("make_policy", &heuristics::make_policy, py::arg("name"), py::arg("episode"),
          py::arg("chargers"), py::arg("repair") = true);
    m.def("laxity_hours", &heuristics::laxity_hours, py::arg("remaining_slots"),
          py::arg("energy_need_kwh"), py::arg("c_max_kw"), py::arg("delta_h"));

    // ------------------------------------------------------------ oracle
    py::class_<oracle::Weights>(m, "Weights")
        .def(py::init([](double missing, double energy, double demand) {
                 return oracle::Weights{missing, energy, demand};
             }),
             py::arg("missing") = 1.0, py::arg("energy") = 1.0, py::arg("demand") = 3.0)
        .def_readwrite("missing", &oracle::Weights::missing)
        .def_readwrite("energy", &oracle::Weights::energy)
        .def_readwrite("demand", &oracle::Weights::demand);
    m.def("weighted_objective", &oracle::weighted_objective, py::arg("bill"),
          py::arg("weights") = oracle::Weights{});

    py::class_<oracle::OracleSolution>(m, "OracleSolution")
        .def_readonly("status", &oracle::OracleSolution::status)
        .def_readonly("schedule", &oracle::OracleSolution::schedule)
        .def_readonly("objective", &oracle::OracleSolution::objective)
        .def_readonly("peak_kw", &oracle::OracleSolution::peak_kw)
        .def_readonly("missing_soc", &oracle::OracleSolution::missing_soc)
        .def_readonly("iterations", &oracle::OracleSolution::iterations)
        .def_readonly("bill", &oracle::OracleSolution::bill);

    m.def("solve_episode", &oracle::solve_episode, py::arg("episode"), py::arg("chargers"),
          py::arg("assignment") = AssignmentPolicy{}, py::arg("weights") = oracle::Weights{},
          py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
    m.def("guidance_action", &oracle::guidance_action, py::arg("state"), py::arg("episode"),
          py::arg("chargers"), py::arg("assignment") = AssignmentPolicy{},
          py::arg("weights") = oracle::Weights{}, py::arg("seed") = 0,
          py::call_guard<py::gil_scoped_release>());

    // ----------------------------------------------------------- sampler
    py::class_<datagen::ScenarioSpec>(m, "ScenarioSpec")
        .def(py::init<>())
        .def_readwrite("arrival_rate", &datagen::ScenarioSpec::arrival_rate)
        .def_readwrite("arrival_hour_mean", &datagen::ScenarioSpec::arrival_hour_mean)
        .def_readwrite("arrival_hour_sd", &datagen::ScenarioSpec::arrival_hour_sd)
        .def_readwrite("stay_hours_mean", &datagen::ScenarioSpec::stay_hours_mean)
        .def_readwrite("stay_hours_sd", &datagen::ScenarioSpec::stay_hours_sd)
        .def_readwrite("stay_hours_min", &datagen::ScenarioSpec::stay_hours_min)
        .def_readwrite("soc_init_mean", &datagen::ScenarioSpec::soc_init_mean)
        .def_readwrite("soc_init_sd", &datagen::ScenarioSpec::soc_init_sd)
        .def_readwrite("soc_req_mean", &datagen::ScenarioSpec::soc_req_mean)
        .def_readwrite("soc_req_sd", &datagen::ScenarioSpec::soc_req_sd)
        .def_readwrite("capacities_kwh", &datagen::ScenarioSpec::capacities_kwh)
        .def_readwrite("capacity_weights", &datagen::ScenarioSpec::capacity_weights)
        .def_readwrite("building_base_kw", &datagen::ScenarioSpec::building_base_kw)
        .def_readwrite("building_noise_kw", &datagen::ScenarioSpec::building_noise_kw)
        .def_readwrite("weekdays", &datagen::ScenarioSpec::weekdays)
        .def_readwrite("tariff", &datagen::ScenarioSpec::tariff)
        .def_readwrite("seed", &datagen::ScenarioSpec::seed)
        .def("validate", &datagen::ScenarioSpec::validate);

    m.def("default_building_curve", &datagen::default_building_curve, py::arg("slots_per_day"));
    m.def("sample_month", &datagen::sample_month, py::arg("spec"), py::arg("seed"));
    m.def(
        "split_daily",
        [](const Episode& monthly) {
            int dropped = 0;
            auto days = datagen::split_daily(monthly, &dropped);
            return py::make_tuple(days, dropped);
        },
        py::arg("monthly"));
    m.def("estimate_peak", &datagen::estimate_peak, py::arg("monthly"), py::arg("chargers"),
          py::arg("weights") = oracle::Weights{}, py::arg("inflate") = 0.0,
          py::call_guard<py::gil_scoped_release>());
    m.attr("Z99") = datagen::kZ99;

    py::class_<datagen::KMeansResult>(m, "KMeansResult")
        .def_readonly("labels", &datagen::KMeansResult::labels)
        .def_readonly("centers", &datagen::KMeansResult::centers)
        .def_readonly("objective_per_iter", &datagen::KMeansResult::objective_per_iter)
        .def_readonly("iterations", &datagen::KMeansResult::iterations);
    m.def(
        "kmeans_1d",
        [](const std::vector<double>& values, int k, unsigned long long seed) {
            std::mt19937_64 rng(seed);
            return datagen::kmeans_1d(values, k, rng);
        },
        py::arg("values"), py::arg("k"), py::arg("seed") = 0);

    py::class_<datagen::EpisodeFile>(m, "EpisodeFile")
        .def(py::init<>())
        .def_readwrite("episode", &datagen::EpisodeFile::episode)
        .def_readwrite("chargers", &datagen::EpisodeFile::chargers)
        .def_readwrite("seed", &datagen::EpisodeFile::seed);
    m.def("episode_to_json", &datagen::episode_to_json, py::arg("file"));
    m.def("episode_from_json", &datagen::episode_from_json, py::arg("text"));
    m.def("save_episode", &datagen::save_episode, py::arg("path"), py::arg("file"));
    m.def("load_episode", &datagen::load_episode, py::arg("path"));
    m.def("scenario_to_json", &datagen::scenario_to_json, py::arg("spec"));
    m.def("scenario_from_json", &datagen::scenario_from_json, py::arg("text"));

    // ---------------------------------------------------------- learning
    py::class_<rl::Mlp>(m, "Mlp")
        .def_readonly("sizes", &rl::Mlp::sizes)
        .def_readonly("tanh_output", &rl::Mlp::tanh_output)
        .def("in_dim", &rl::Mlp::in_dim)
        .def("out_dim", &rl::Mlp::out_dim)
        .def("n_layers", &rl::Mlp::n_layers);

    py::class_<rl::DdpgConfig>(m, "DdpgConfig")
        .def(py::init<>())
        .def_readwrite("gamma", &rl::DdpgConfig::gamma)
        .def_readwrite("lr_actor", &rl::DdpgConfig::lr_actor)
        .def_readwrite("lr_critic", &rl::DdpgConfig::lr_critic)
        .def_readwrite("batch", &rl::DdpgConfig::batch)
        .def_readwrite("buffer", &rl::DdpgConfig::buffer)
        .def_readwrite("noise_sigma", &rl::DdpgConfig::noise_sigma)
        .def_readwrite("r_pg", &rl::DdpgConfig::r_pg)
        .def_readwrite("lambdas", &rl::DdpgConfig::lambdas)
        .def_readwrite("train_step", &rl::DdpgConfig::train_step)
        .def_readwrite("update_step", &rl::DdpgConfig::update_step)
        .def_readwrite("tau_soft", &rl::DdpgConfig::tau_soft)
        .def_readwrite("seed", &rl::DdpgConfig::seed)
        .def_readwrite("hidden", &rl::DdpgConfig::hidden)
        .def_readwrite("max_steps", &rl::DdpgConfig::max_steps)
        .def_readwrite("greedy_override", &rl::DdpgConfig::greedy_override)
        .def_readwrite("eval_every", &rl::DdpgConfig::eval_every)
        .def_readwrite("patience", &rl::DdpgConfig::patience)
        .def("validate", &rl::DdpgConfig::validate);

    py::class_<rl::EvalPoint>(m, "EvalPoint")
        .def_readonly("step", &rl::EvalPoint::step)
        .def_readonly("reward", &rl::EvalPoint::reward)
        .def_readonly("bill_usd", &rl::EvalPoint::bill_usd);

    py::class_<rl::TrainResult>(m, "TrainResult")
        .def_readonly("actor", &rl::TrainResult::actor)
        .def_readonly("critic", &rl::TrainResult::critic)
        .def_readonly("steps", &rl::TrainResult::steps)
        .def_readonly("episodes_run", &rl::TrainResult::episodes_run)
        .def_readonly("updates", &rl::TrainResult::updates)
        .def_readonly("buffer_oracle_fraction", &rl::TrainResult::buffer_oracle_fraction)
        .def_readonly("best_eval_reward", &rl::TrainResult::best_eval_reward)
        .def_readonly("eval_history", &rl::TrainResult::eval_history)
        .def_readonly("early_stopped", &rl::TrainResult::early_stopped);

    m.def(
        "train",
        [](const std::vector<Episode>& episodes, const std::vector<ChargerSpec>& chargers,
           const rl::DdpgConfig& config, std::optional<NormConstants> norm,
           const std::vector<Episode>& holdout) {
            NormConstants nc = norm ? *norm : NormConstants::from_episodes(episodes, chargers);
            py::gil_scoped_release release;
            return rl::train(episodes, chargers, config, nc, holdout);
        },
        py::arg("episodes"), py::arg("chargers"), py::arg("config") = rl::DdpgConfig{},
        py::arg("norm") = std::nullopt, py::arg("holdout") = std::vector<Episode>{});

    m.def("reward", &rl::reward, py::arg("state"), py::arg("action_kw"), py::arg("tariff"),
          py::arg("lambdas"));
    m.def("greedy_offpeak", &rl::greedy_offpeak, py::arg("state"), py::arg("chargers"),
          py::arg("delta_h"));
    m.def("normalize_action", &rl::normalize_action, py::arg("kw"), py::arg("chargers"));
    m.def("denormalize_action", &rl::denormalize_action, py::arg("unit"), py::arg("chargers"));
    m.def("make_actor_policy", &rl::make_actor_policy, py::arg("actor"), py::arg("chargers"),
          py::arg("episode"), py::arg("norm"));

    py::class_<rl::EvalRow>(m, "EvalRow")
        .def_readonly("policy", &rl::EvalRow::policy)
        .def_readonly("bill_mean", &rl::EvalRow::bill_mean)
        .def_readonly("bill_std", &rl::EvalRow::bill_std)
        .def_readonly("shave_mean", &rl::EvalRow::shave_mean)
        .def_readonly("shave_std", &rl::EvalRow::shave_std)
        .def_readonly("missing_mean", &rl::EvalRow::missing_mean)
        .def_readonly("bills", &rl::EvalRow::bills)
        .def_readonly("shaves", &rl::EvalRow::shaves)
        .def_readonly("missing", &rl::EvalRow::missing)
        .def("__repr__", [](const rl::EvalRow& r) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "EvalRow(%s, bill=%.4f+-%.4f, shave=%.3f)",
                          r.policy.c_str(), r.bill_mean, r.bill_std, r.shave_mean);
            return std::string(buf);
        });

    py::class_<rl::EvalOptions>(m, "EvalOptions")
        .def(py::init<>())
        .def_readwrite("policies", &rl::EvalOptions::policies)
        .def_readwrite("assignment", &rl::EvalOptions::assignment)
        .def_readwrite("weights", &rl::EvalOptions::weights)
        .def_readwrite("seed", &rl::EvalOptions::seed)
        .def_readwrite("greedy_override", &rl::EvalOptions::greedy_override)
        .def_readwrite("jobs", &rl::EvalOptions::jobs);

    m.def(
        "evaluate",
        [](const std::vector<Episode>& episodes, const std::vector<ChargerSpec>& chargers,
           std::optional<rl::Mlp> actor, std::optional<NormConstants> norm,
           const rl::EvalOptions& options) {
            NormConstants nc = norm ? *norm : NormConstants::from_episodes(episodes, chargers);
            py::gil_scoped_release release;
            return rl::evaluate(episodes, chargers, actor ? &*actor : nullptr, nc, options);
        },
        py::arg("episodes"), py::arg("chargers"), py::arg("actor") = std::nullopt,
        py::arg("norm") = std::nullopt, py::arg("options") = rl::EvalOptions{});

    py::class_<rl::Checkpoint>(m, "Checkpoint")
        .def(py::init<>())
        .def_readwrite("actor", &rl::Checkpoint::actor)
        .def_readwrite("norm", &rl::Checkpoint::norm);
    m.def("checkpoint_to_json", &rl::checkpoint_to_json, py::arg("checkpoint"));
    m.def("checkpoint_from_json", &rl::checkpoint_from_json, py::arg("text"));
    m.def("save_checkpoint", &rl::save_checkpoint, py::arg("path"), py::arg("checkpoint"));
    m.def("load_checkpoint", &rl::load_checkpoint, py::arg("path"));

#ifdef V2BLAB_VERSION
    m.attr("__version__") = V2BLAB_VERSION;
#else
    m.attr("__version__") = "dev";
#endif
}
