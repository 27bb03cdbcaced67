#include "v2b/rl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <thread>

#include "v2b/common.hpp"
#include "v2b/heuristics.hpp"
#include "v2b/mask.hpp"

namespace v2b::rl {

using nlohmann::json;

// ---------------------------------------------------------------- networks

void Mlp::validate() const {
    if (sizes.size() < 2) throw ConfigError("mlp needs at least one layer");
    if (weights.size() + 1 != sizes.size() || biases.size() != weights.size())
        throw ConfigError("mlp layer bookkeeping is inconsistent");
    for (size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != sizes[l + 1] || weights[l].cols() != sizes[l] ||
            biases[l].size() != sizes[l + 1])
            throw ConfigError("mlp layer " + std::to_string(l) + " has the wrong shape");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw NumericError("mlp layer " + std::to_string(l) + " holds non-finite values");
    }
}

Mlp make_mlp(const std::vector<int>& sizes, bool tanh_output, std::mt19937_64& rng) {
    Mlp m;
    m.sizes = sizes;
    m.tanh_output = tanh_output;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
        Eigen::VectorXd b(sizes[l + 1]);
        for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
        for (int r = 0; r < b.size(); ++r) b(r) = u(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    m.validate();
    return m;
}

Mlp make_actor(int hidden, std::mt19937_64& rng) {
    return make_mlp({kFeatureDim, hidden, hidden, kChargerFeatureSlots}, true, rng);
}

Mlp make_critic(int hidden, std::mt19937_64& rng) {
    return make_mlp({kFeatureDim + kChargerFeatureSlots, hidden, hidden, 1}, false, rng);
}

Eigen::VectorXd forward(const Mlp& m, const Eigen::VectorXd& x, MlpCache* cache) {
    if (x.size() != m.in_dim()) throw ConfigError("mlp input has the wrong width");
    if (cache) {
        cache->pre.clear();
        cache->post.assign(1, x);
    }
    Eigen::VectorXd h = x;
    for (int l = 0; l < m.n_layers(); ++l) {
        Eigen::VectorXd z = m.weights[l] * h + m.biases[l];
        if (cache) cache->pre.push_back(z);
        if (l + 1 < m.n_layers())
            h = z.cwiseMax(0.0);
        else if (m.tanh_output)
            h = z.array().tanh().matrix();
        else
            h = z;
        if (cache) cache->post.push_back(h);
    }
    return h;
}

MlpGrads MlpGrads::zeros_like(const Mlp& m) {
    MlpGrads g;
    for (int l = 0; l < m.n_layers(); ++l) {
        g.weights.emplace_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        g.biases.emplace_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    g.input = Eigen::VectorXd::Zero(m.in_dim());
    return g;
}

void MlpGrads::accumulate(const MlpGrads& other, double s) {
    for (size_t l = 0; l < weights.size(); ++l) {
        weights[l] += s * other.weights[l];
        biases[l] += s * other.biases[l];
    }
    input += s * other.input;
}

void MlpGrads::scale(double s) {
    for (size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= s;
        biases[l] *= s;
    }
    input *= s;
}

MlpGrads backward(const Mlp& m, const MlpCache& cache, const Eigen::VectorXd& d_out) {
    MlpGrads g;
    g.weights.resize(m.n_layers());
    g.biases.resize(m.n_layers());
    Eigen::VectorXd d = d_out;
    for (int l = m.n_layers() - 1; l >= 0; --l) {
        Eigen::VectorXd dz;
        if (l + 1 == m.n_layers()) {
            if (m.tanh_output) {
                // d tanh(z) = 1 - tanh(z)^2, and post holds tanh(z)
                dz = (d.array() * (1.0 - cache.post[l + 1].array().square())).matrix();
            } else {
                dz = d;
            }
        } else {
            dz = (d.array() * (cache.pre[l].array() > 0.0).cast<double>()).matrix();
        }
        g.weights[l] = dz * cache.post[l].transpose();
        g.biases[l] = dz;
        d = m.weights[l].transpose() * dz;
    }
    g.input = d;
    return g;
}

Adam::Adam(const Mlp& m, double lr_) : lr(lr_) {
    for (int l = 0; l < m.n_layers(); ++l) {
        mw.emplace_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        vw.emplace_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        mb.emplace_back(Eigen::VectorXd::Zero(m.biases[l].size()));
        vb.emplace_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
}

void Adam::step(Mlp& m, const MlpGrads& g) {
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t l = 0; l < mw.size(); ++l) {
        mw[l] = beta1 * mw[l] + (1.0 - beta1) * g.weights[l];
        vw[l] = beta2 * vw[l] + (1.0 - beta2) * g.weights[l].cwiseProduct(g.weights[l]);
        mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.biases[l];
        vb[l] = beta2 * vb[l] + (1.0 - beta2) * g.biases[l].cwiseProduct(g.biases[l]);
        m.weights[l].array() -=
            lr * (mw[l] / c1).array() / ((vw[l] / c2).array().sqrt() + eps);
        m.biases[l].array() -= lr * (mb[l] / c1).array() / ((vb[l] / c2).array().sqrt() + eps);
    }
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
    for (int l = 0; l < target.n_layers(); ++l) {
        target.weights[l] = tau * source.weights[l] + (1.0 - tau) * target.weights[l];
        target.biases[l] = tau * source.biases[l] + (1.0 - tau) * target.biases[l];
    }
}

// ----------------------------------------------------------- action algebra

Action normalize_action(const Action& kw, const std::vector<ChargerSpec>& chargers) {
    Action out(kw.size());
    for (size_t i = 0; i < kw.size(); ++i) {
        double span = chargers[i].p_max_kw - chargers[i].p_min_kw;
        out[i] = span > 0 ? 2.0 * (kw[i] - chargers[i].p_min_kw) / span - 1.0 : 0.0;
    }
    return out;
}

Action denormalize_action(const Action& unit, const std::vector<ChargerSpec>& chargers) {
    Action out(unit.size());
    for (size_t i = 0; i < unit.size(); ++i) {
        double span = chargers[i].p_max_kw - chargers[i].p_min_kw;
        out[i] = chargers[i].p_min_kw + (unit[i] + 1.0) * 0.5 * span;
    }
    return out;
}

double reward(const SimState& state, const Action& action_kw, const Tariff& tariff,
              const oracle::Weights& lambdas) {
    double delivered = 0, total = 0;
    for (size_t i = 0; i < action_kw.size(); ++i) {
        delivered += std::max(0.0, std::min(state.energy_need_kwh[i],
                                            action_kw[i] * tariff.delta_h));
        total += action_kw[i];
    }
    double energy_cost = total * tariff.delta_h * energy_rate(tariff, state.slot);
    double breach = std::max(0.0, state.building_kw + total - state.estimated_peak_kw);
    return lambdas.missing * delivered - lambdas.energy * energy_cost -
           lambdas.demand * breach * tariff.theta_d;
}

// --------------------------------------------------------------- the buffer

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
    ++pushed_;
}

double ReplayBuffer::oracle_fraction() const {
    if (data_.empty()) return 0;
    size_t n = 0;
    for (const auto& t : data_) n += t.from_oracle ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(data_.size());
}

std::vector<const Transition*> ReplayBuffer::sample(int batch, std::mt19937_64& rng) const {
    if (batch <= 0 || static_cast<size_t>(batch) > data_.size())
        throw ConfigError("batch larger than buffer");
    std::vector<size_t> idx;
    idx.reserve(batch);
    if (data_.size() <= 2 * static_cast<size_t>(batch)) {
        // partial Fisher-Yates when the buffer is still small
        std::vector<size_t> all(data_.size());
        std::iota(all.begin(), all.end(), 0);
        for (int k = 0; k < batch; ++k) {
            std::uniform_int_distribution<size_t> pick(k, all.size() - 1);
            std::swap(all[k], all[pick(rng)]);
            idx.push_back(all[k]);
        }
    } else {
        std::uniform_int_distribution<size_t> pick(0, data_.size() - 1);
        while (idx.size() < static_cast<size_t>(batch)) {
            size_t cand = pick(rng);
            if (std::find(idx.begin(), idx.end(), cand) == idx.end()) idx.push_back(cand);
        }
    }
    std::vector<const Transition*> out(batch);
    for (int k = 0; k < batch; ++k) out[k] = &data_[idx[k]];
    return out;
}

// ------------------------------------------------------------ config checks

void DdpgConfig::validate() const {
    if (gamma < 0 || gamma > 1) throw ConfigError("gamma must lie in [0,1]");
    if (lr_actor <= 0 || lr_critic <= 0) throw ConfigError("learning rates must be positive");
    if (batch <= 0 || buffer < static_cast<size_t>(batch))
        throw ConfigError("need buffer >= batch > 0");
    if (noise_sigma < 0) throw ConfigError("noise sigma must be nonnegative");
    if (r_pg < 0 || r_pg > 1) throw ConfigError("guidance probability must lie in [0,1]");
    if (train_step <= 0 || update_step <= 0) throw ConfigError("cadences must be positive");
    if (tau_soft <= 0 || tau_soft > 1) throw ConfigError("tau must lie in (0,1]");
    if (hidden <= 0 || max_steps <= 0) throw ConfigError("sizes must be positive");
    if (eval_every < 0 || patience < 0) throw ConfigError("eval cadence must be nonnegative");
}

// ----------------------------------------------------- policy-side plumbing

namespace {

Eigen::VectorXd pad_unit_action(const Action& unit) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kChargerFeatureSlots);
    for (size_t i = 0; i < unit.size() && i < static_cast<size_t>(kChargerFeatureSlots); ++i)
        out(static_cast<int>(i)) = unit[i];
    return out;
}

Action head(const Eigen::VectorXd& v, size_t n) {
    Action out(n);
    for (size_t i = 0; i < n; ++i) out[i] = v(static_cast<int>(i));
    return out;
}

Eigen::VectorXd critic_input(const Eigen::VectorXd& features, const Eigen::VectorXd& unit) {
    Eigen::VectorXd x(features.size() + unit.size());
    x << features, unit;
    return x;
}

}  // namespace

double actor_objective(const Mlp& actor, const Mlp& critic, const Eigen::VectorXd& features,
                       const MaskInputs& mask_in, const std::vector<ChargerSpec>& chargers,
                       MlpGrads* grads, std::vector<uint8_t>* pattern) {
    const size_t n = chargers.size();
    MlpCache acache;
    Eigen::VectorXd raw = forward(actor, features, grads ? &acache : nullptr);

    Action kw = denormalize_action(head(raw, n), chargers);
    Eigen::VectorXd kw_vec = Eigen::Map<const Eigen::VectorXd>(kw.data(), kw.size());
    MaskResult masked = mask_action(mask_in, kw_vec, grads != nullptr);
    if (pattern) *pattern = masked.pattern;

    Action unit = normalize_action(head(masked.action, n), chargers);
    Eigen::VectorXd a_pad = pad_unit_action(unit);

    MlpCache ccache;
    Eigen::VectorXd q = forward(critic, critic_input(features, a_pad), grads ? &ccache : nullptr);

    if (grads) {
        Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
        MlpGrads cg = backward(critic, ccache, one);
        // dq/d(padded unit action); feature slice of the critic input is constant here
        Eigen::VectorXd d_unit = cg.input.tail(kChargerFeatureSlots);
        // unwind normalize -> mask -> denormalize; the affine scales cancel
        // into span/2 * (2/span) around the mask Jacobian
        Eigen::VectorXd d_raw = Eigen::VectorXd::Zero(actor.out_dim());
        for (size_t i = 0; i < n; ++i) {
            double span_i = chargers[i].p_max_kw - chargers[i].p_min_kw;
            if (span_i <= 0) continue;
            double acc = 0;
            for (size_t j = 0; j < n; ++j) {
                double span_j = chargers[j].p_max_kw - chargers[j].p_min_kw;
                if (span_j <= 0) continue;
                acc += d_unit(static_cast<int>(j)) * (2.0 / span_j) *
                       masked.jacobian(static_cast<int>(j), static_cast<int>(i)) *
                       (span_i / 2.0);
            }
            d_raw(static_cast<int>(i)) = acc;
        }
        *grads = backward(actor, acache, d_raw);
    }
    return q(0);
}

Action greedy_offpeak(const SimState& state, const std::vector<ChargerSpec>& chargers,
                      double delta_h) {
    Action a(chargers.size(), 0.0);
    for (size_t i = 0; i < chargers.size(); ++i) {
        if (state.occupancy[i] < 0) continue;
        double need = state.energy_need_kwh[i];
        if (need >= 0)
            a[i] = std::min(chargers[i].p_max_kw, need / delta_h);
        else if (chargers[i].bidirectional())
            a[i] = std::max(chargers[i].p_min_kw, need / delta_h);
    }
    return a;
}

PolicyFn make_actor_policy(const Mlp& actor, const std::vector<ChargerSpec>& chargers,
                           const Episode& episode, const NormConstants& norm) {
    auto net = std::make_shared<const Mlp>(actor);
    auto ch = std::make_shared<const std::vector<ChargerSpec>>(chargers);
    auto ep = std::make_shared<const Episode>(episode);
    return [net, ch, ep, norm](const SimState& st) {
        Eigen::VectorXd raw = forward(*net, featurize(st, norm));
        Action kw = denormalize_action(head(raw, ch->size()), *ch);
        Action masked = mask_action(mask_inputs_of(st, *ch, ep->tariff), kw);
        return finalize_action(st, *ch, *ep, masked);
    };
}

PolicyFn make_override_policy(const std::vector<ChargerSpec>& chargers, const Episode& episode) {
    auto ch = std::make_shared<const std::vector<ChargerSpec>>(chargers);
    auto ep = std::make_shared<const Episode>(episode);
    return [ch, ep](const SimState& st) {
        return finalize_action(st, *ch, *ep, greedy_offpeak(st, *ch, ep->tariff.delta_h));
    };
}

// ------------------------------------------------------------- the trainer

namespace {

struct Learner {
    const std::vector<Episode>& episodes;
    const std::vector<ChargerSpec>& chargers;
    const DdpgConfig& cfg;
    const NormConstants& norm;
    const std::vector<Episode>& holdout;

    std::mt19937_64 rng;
    Mlp actor, critic, actor_t, critic_t;
    Adam adam_a, adam_c;
    ReplayBuffer buffer;
    AssignmentPolicy assign;
    TrainResult out;

    Learner(const std::vector<Episode>& eps, const std::vector<ChargerSpec>& ch,
            const DdpgConfig& c, const NormConstants& n, const std::vector<Episode>& hold)
        : episodes(eps),
          chargers(ch),
          cfg(c),
          norm(n),
          holdout(hold),
          rng(c.seed),
          actor(make_actor(c.hidden, rng)),
          critic(make_critic(c.hidden, rng)),
          actor_t(actor),
          critic_t(critic),
          adam_a(actor, c.lr_actor),
          adam_c(critic, c.lr_critic),
          buffer(c.buffer) {}

    bool governed(const Episode& ep, int slot) const {
        if (!cfg.greedy_override) return true;
        return ep.is_weekday_slot(slot) && ep.tariff.is_peak_slot(slot);
    }

    void update() {
        auto batch = buffer.sample(cfg.batch, rng);
        const double inv = 1.0 / cfg.batch;

        MlpGrads cg = MlpGrads::zeros_like(critic);
        double loss = 0;
        for (const Transition* tr : batch) {
            double y = tr->reward;
            if (!tr->done) {
                Eigen::VectorXd raw = forward(actor_t, tr->next_features);
                Action kw = denormalize_action(head(raw, chargers.size()), chargers);
                Action masked = mask_action(tr->next_mask, kw);
                Eigen::VectorXd a_pad = pad_unit_action(normalize_action(masked, chargers));
                y += cfg.gamma * forward(critic_t, critic_input(tr->next_features, a_pad))(0);
            }
            MlpCache cache;
            double q = forward(critic, critic_input(tr->features, tr->action), &cache)(0);
            double diff = q - y;
            loss += diff * diff * inv;
            Eigen::VectorXd d_out(1);
            d_out(0) = 2.0 * diff * inv;
            cg.accumulate(backward(critic, cache, d_out));
        }
        if (!std::isfinite(loss))
            throw NumericError("critic loss diverged at update " +
                               std::to_string(out.updates) + " (step " +
                               std::to_string(out.steps) + "): loss=" + std::to_string(loss));
        adam_c.step(critic, cg);

        MlpGrads ag = MlpGrads::zeros_like(actor);
        double mean_q = 0;
        for (const Transition* tr : batch) {
            MlpGrads g;
            mean_q += inv * actor_objective(actor, critic, tr->features, tr->mask, chargers, &g);
            ag.accumulate(g, -inv);  // ascend the critic's value
        }
        if (!std::isfinite(mean_q))
            throw NumericError("actor objective diverged at update " +
                               std::to_string(out.updates) + ": q=" + std::to_string(mean_q));
        adam_a.step(actor, ag);
        ++out.updates;
    }

    EvalPoint holdout_eval() {
        EvalPoint pt;
        pt.step = out.steps;
        for (size_t k = 0; k < holdout.size(); ++k) {
            const Episode& ep = holdout[k];
            RolloutOptions ro;
            ro.assignment = assign;
            ro.norm = norm;
            ro.seed = cfg.seed + k;
            if (cfg.greedy_override) ro.offpeak_override = make_override_policy(chargers, ep);
            Tariff tf = ep.tariff;
            oracle::Weights lam = cfg.lambdas;
            ro.reward_fn = [tf, lam](const SimState& st, const Action& a) {
                return reward(st, a, tf, lam);
            };
            auto res = rollout(chargers, ep, make_actor_policy(actor, chargers, ep, norm), ro);
            pt.reward += res.total_reward;
            pt.bill_usd += res.bill.total_usd;
        }
        pt.reward /= static_cast<double>(holdout.size());
        pt.bill_usd /= static_cast<double>(holdout.size());
        return pt;
    }

    TrainResult run() {
        std::bernoulli_distribution use_oracle(cfg.r_pg);
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        double best = -std::numeric_limits<double>::infinity();
        int stale = 0;

        while (out.steps < cfg.max_steps) {
            const Episode& ep = episodes[out.episodes_run % episodes.size()];
            SimState st = init_state(chargers, ep, assign, rng);
            while (!st.done && out.steps < cfg.max_steps) {
                if (!governed(ep, st.slot)) {
                    Action a = finalize_action(st, chargers, ep,
                                               greedy_offpeak(st, chargers, ep.tariff.delta_h));
                    transition(st, a, ep, chargers, assign, rng);
                    continue;
                }
                Eigen::VectorXd feat = featurize(st, norm);
                MaskInputs mask_in = mask_inputs_of(st, chargers, ep.tariff);
                bool from_oracle = use_oracle(rng);
                Action executed;
                if (from_oracle) {
                    Action kw = oracle::guidance_action(st, ep, chargers, assign, cfg.lambdas);
                    executed = finalize_action(st, chargers, ep, kw);
                } else {
                    Eigen::VectorXd raw = forward(actor, feat);
                    Action unit = head(raw, chargers.size());
                    for (double& u : unit) u = std::clamp(u + noise(rng), -1.0, 1.0);
                    Action masked = mask_action(mask_in, denormalize_action(unit, chargers));
                    executed = finalize_action(st, chargers, ep, masked);
                }
                double r = reward(st, executed, ep.tariff, cfg.lambdas);
                transition(st, executed, ep, chargers, assign, rng);

                Transition tr;
                tr.features = feat;
                tr.action = pad_unit_action(normalize_action(executed, chargers));
                tr.reward = r;
                tr.next_features = featurize(st, norm);
                tr.mask = mask_in;
                tr.next_mask = mask_inputs_of(st, chargers, ep.tariff);
                tr.done = st.done;
                tr.from_oracle = from_oracle;
                buffer.push(std::move(tr));

                ++out.steps;
                if (buffer.size() >= static_cast<size_t>(cfg.batch)) {
                    if (out.steps % cfg.train_step == 0) update();
                    if (out.steps % cfg.update_step == 0) {
                        soft_update(actor_t, actor, cfg.tau_soft);
                        soft_update(critic_t, critic, cfg.tau_soft);
                    }
                }
            }
            ++out.episodes_run;
            if (cfg.eval_every > 0 && !holdout.empty() &&
                out.episodes_run % cfg.eval_every == 0) {
                EvalPoint pt = holdout_eval();
                out.eval_history.push_back(pt);
                if (pt.reward > best + 1e-12) {
                    best = pt.reward;
                    stale = 0;
                } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
                    out.early_stopped = true;
                    break;
                }
            }
        }
        out.actor = std::move(actor);
        out.critic = std::move(critic);
        out.buffer_oracle_fraction = buffer.oracle_fraction();
        out.best_eval_reward = best;
        return std::move(out);
    }
};

}  // namespace

TrainResult train(const std::vector<Episode>& episodes, const std::vector<ChargerSpec>& chargers,
                  const DdpgConfig& config, const NormConstants& norm,
                  const std::vector<Episode>& holdout) {
    config.validate();
    if (episodes.empty()) throw ConfigError("training needs at least one episode");
    if (chargers.empty() || chargers.size() > static_cast<size_t>(kChargerFeatureSlots))
        throw ConfigError("charger count must lie in [1, " +
                          std::to_string(kChargerFeatureSlots) + "]");
    Learner learner(episodes, chargers, config, norm, holdout);
    return learner.run();
}

// -------------------------------------------------------------- evaluation

std::vector<EvalRow> evaluate(const std::vector<Episode>& episodes,
                              const std::vector<ChargerSpec>& chargers, const Mlp* actor,
                              const NormConstants& norm, const EvalOptions& opts) {
    if (episodes.empty()) throw ConfigError("evaluation needs episodes");
    if (opts.jobs < 1) throw ConfigError("jobs must be at least 1");
    std::vector<std::string> names = opts.policies;
    if (names.empty()) {
        names.emplace_back("oracle");
        for (const auto& h : heuristics::policy_names()) names.push_back(h);
        if (actor) names.emplace_back("rl");
    }
    for (const auto& name : names) {
        if (name == "oracle") continue;
        if (name == "rl") {
            if (!actor) throw ConfigError("no trained policy supplied");
            continue;
        }
        const auto& known = heuristics::policy_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw ConfigError("unknown policy: " + name);
    }

    std::vector<EvalRow> rows;
    for (const auto& name : names) {
        EvalRow row;
        row.policy = name;
        row.bills.resize(episodes.size());
        row.shaves.resize(episodes.size());
        row.missing.resize(episodes.size());
        auto run_one = [&](size_t k) {
            const Episode& ep = episodes[k];
            BillBreakdown bill;
            if (name == "oracle") {
                auto sol = oracle::solve_episode(ep, chargers, opts.assignment, opts.weights,
                                                 opts.seed + k);
                if (sol.status != lp::Status::Optimal)
                    throw NumericError("planner failed on evaluation episode " +
                                       std::to_string(k));
                bill = sol.bill;
            } else {
                RolloutOptions ro;
                ro.assignment = opts.assignment;
                ro.norm = norm;
                ro.seed = opts.seed + k;
                PolicyFn policy;
                if (name == "rl") {
                    policy = make_actor_policy(*actor, chargers, ep, norm);
                    if (opts.greedy_override)
                        ro.offpeak_override = make_override_policy(chargers, ep);
                } else {
                    policy = heuristics::make_policy(name, ep, chargers);
                }
                bill = rollout(chargers, ep, policy, ro).bill;
            }
            double base_peak = building_only_bill(ep.tariff, ep.building_kw).peak_kw;
            row.bills[k] = bill.total_usd;
            row.shaves[k] = base_peak - bill.peak_kw;
            row.missing[k] = bill.missing_soc_kwh;
        };
        size_t workers = std::min<size_t>(static_cast<size_t>(opts.jobs), episodes.size());
        if (workers <= 1) {
            for (size_t k = 0; k < episodes.size(); ++k) run_one(k);
        } else {
            std::atomic<size_t> cursor{0};
            std::vector<std::exception_ptr> errors(workers);
            std::vector<std::thread> pool;
            for (size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (;;) {
                            size_t k = cursor.fetch_add(1);
                            if (k >= episodes.size()) break;
                            run_one(k);
                        }
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& t : pool) t.join();
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        auto stats = [](const std::vector<double>& v) {
            double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
            double s2 = 0;
            for (double x : v) s2 += (x - m) * (x - m);
            return std::pair<double, double>(m, std::sqrt(s2 / v.size()));
        };
        std::tie(row.bill_mean, row.bill_std) = stats(row.bills);
        std::tie(row.shave_mean, row.shave_std) = stats(row.shaves);
        row.missing_mean =
            std::accumulate(row.missing.begin(), row.missing.end(), 0.0) / episodes.size();
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const EvalRow& a, const EvalRow& b) { return a.bill_mean < b.bill_mean; });
    return rows;
}

// -------------------------------------------------------------- checkpoints

namespace {

json mlp_to_json(const Mlp& m) {
    json j;
    j["sizes"] = m.sizes;
    j["tanh_output"] = m.tanh_output;
    json ws = json::array(), bs = json::array();
    for (int l = 0; l < m.n_layers(); ++l) {
        std::vector<double> w;  // row-major flat; the shape comes from sizes
        w.reserve(m.weights[l].size());
        for (int r = 0; r < m.weights[l].rows(); ++r)
            for (int c = 0; c < m.weights[l].cols(); ++c) w.push_back(m.weights[l](r, c));
        ws.push_back(std::move(w));
        bs.push_back(std::vector<double>(m.biases[l].data(),
                                         m.biases[l].data() + m.biases[l].size()));
    }
    j["weights"] = std::move(ws);
    j["biases"] = std::move(bs);
    return j;
}

Mlp mlp_from_json(const json& j) {
    Mlp m;
    m.sizes = j.at("sizes").get<std::vector<int>>();
    m.tanh_output = j.at("tanh_output").get<bool>();
    const json& ws = j.at("weights");
    const json& bs = j.at("biases");
    if (ws.size() + 1 != m.sizes.size() || bs.size() != ws.size())
        throw ConfigError("checkpoint layer count does not match sizes");
    for (size_t l = 0; l < ws.size(); ++l) {
        auto w = ws[l].get<std::vector<double>>();
        auto b = bs[l].get<std::vector<double>>();
        int rows = m.sizes[l + 1], cols = m.sizes[l];
        if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows)
            throw ConfigError("checkpoint layer " + std::to_string(l) + " has the wrong size");
        Eigen::MatrixXd wm(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) wm(r, c) = w[static_cast<size_t>(r) * cols + c];
        m.weights.push_back(std::move(wm));
        m.biases.emplace_back(Eigen::Map<Eigen::VectorXd>(b.data(), rows));
    }
    m.validate();
    return m;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["format"] = "v2b-checkpoint";
    j["version"] = 1;
    j["actor"] = mlp_to_json(ckpt.actor);
    j["norm"] = {{"max_building_kw", ckpt.norm.max_building_kw},
                 {"max_capacity_kwh", ckpt.norm.max_capacity_kwh},
                 {"slots_per_day", ckpt.norm.slots_per_day},
                 {"max_window_slots", ckpt.norm.max_window_slots},
                 {"max_arrivals", ckpt.norm.max_arrivals}};
    return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad checkpoint json: ") + e.what());
    }
    try {
        if (j.at("format") != "v2b-checkpoint" || j.at("version") != 1)
            throw ConfigError("unrecognized checkpoint format or version");
        Checkpoint c;
        c.actor = mlp_from_json(j.at("actor"));
        const json& n = j.at("norm");
        c.norm.max_building_kw = n.at("max_building_kw");
        c.norm.max_capacity_kwh = n.at("max_capacity_kwh");
        c.norm.slots_per_day = n.at("slots_per_day");
        c.norm.max_window_slots = n.at("max_window_slots");
        c.norm.max_arrivals = n.at("max_arrivals");
        c.norm.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("incomplete checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + tmp);
        f << checkpoint_to_json(ckpt) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace v2b::rl
