#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "v2b/core.hpp"
#include "v2b/oracle.hpp"
#include "v2b/sim.hpp"

namespace v2b::rl {

// Plain fully-connected net, ReLU hidden layers, optional tanh on the output.
// Actor: kFeatureDim -> 96 -> 96 -> kChargerFeatureSlots (tanh).
// Critic: kFeatureDim + kChargerFeatureSlots -> 96 -> 96 -> 1 (linear).
struct Mlp {
    std::vector<int> sizes;
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    bool tanh_output = false;

    int n_layers() const { return static_cast<int>(weights.size()); }
    int in_dim() const { return sizes.front(); }
    int out_dim() const { return sizes.back(); }
    void validate() const;  // shape consistency + finite parameters
};

Mlp make_mlp(const std::vector<int>& sizes, bool tanh_output, std::mt19937_64& rng);
Mlp make_actor(int hidden, std::mt19937_64& rng);
Mlp make_critic(int hidden, std::mt19937_64& rng);

struct MlpCache {
    std::vector<Eigen::VectorXd> pre;   // pre-activation per layer
    std::vector<Eigen::VectorXd> post;  // post[0] = input, post[l+1] = layer output
};

Eigen::VectorXd forward(const Mlp& m, const Eigen::VectorXd& x, MlpCache* cache = nullptr);

struct MlpGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd input;  // d loss / d input

    static MlpGrads zeros_like(const Mlp& m);
    void accumulate(const MlpGrads& other, double scale = 1.0);
    void scale(double s);
};

// d_out is d loss / d output; returns gradients for every parameter and the
// input vector.
MlpGrads backward(const Mlp& m, const MlpCache& cache, const Eigen::VectorXd& d_out);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long t = 0;
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;

    Adam(const Mlp& m, double lr);
    void step(Mlp& m, const MlpGrads& g);  // descent along g
};

// Affine bijection per charger between [c_min, c_max] and [-1, 1].
Action normalize_action(const Action& kw, const std::vector<ChargerSpec>& chargers);
Action denormalize_action(const Action& unit, const std::vector<ChargerSpec>& chargers);

// lambdas.missing scales delivered energy, .energy the energy cost, .demand the
// breach of the running peak estimate.
double reward(const SimState& state, const Action& action_kw, const Tariff& tariff,
              const oracle::Weights& lambdas);

struct Transition {
    Eigen::VectorXd features;
    Eigen::VectorXd action;  // executed, normalized, padded to kChargerFeatureSlots
    double reward = 0;
    Eigen::VectorXd next_features;
    MaskInputs mask;       // at the decision state, for the policy gradient
    MaskInputs next_mask;  // at the successor, for the target action
    bool done = false;
    bool from_oracle = false;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(size_t capacity);
    void push(Transition t);
    size_t size() const { return data_.size(); }
    size_t pushed() const { return pushed_; }
    double oracle_fraction() const;  // over current contents
    // uniform, without replacement within the batch
    std::vector<const Transition*> sample(int batch, std::mt19937_64& rng) const;

  private:
    std::vector<Transition> data_;
    size_t capacity_;
    size_t next_ = 0;
    size_t pushed_ = 0;
};

struct DdpgConfig {
    double gamma = 1.0;
    double lr_actor = 1e-5;
    double lr_critic = 1e-3;
    int batch = 64;
    size_t buffer = 1000000;
    double noise_sigma = 0.2;   // per dim, in normalized units, pre-mask
    double r_pg = 0.5;          // probability a step is taken by the planner
    oracle::Weights lambdas;    // reward coefficients, shared with the planner
    int train_step = 5;         // gradient update every this many decisions
    int update_step = 5;        // target soft update cadence
    double tau_soft = 0.005;
    unsigned long long seed = 0;
    int hidden = 96;
    int max_steps = 5000;       // decision-step budget
    bool greedy_override = true;
    int eval_every = 0;         // episodes between held-out evals; 0 = never
    int patience = 0;           // stop after this many evals without improvement

    void validate() const;
};

// theta' <- tau * theta + (1 - tau) * theta'
void soft_update(Mlp& target, const Mlp& source, double tau);

// Value and actor-parameter gradient of Q(s, normalize(mask(denormalize(pi(s)))))
// for one state.  `pattern` (optional) reports the mask's active branches so
// callers can spot kink crossings.
double actor_objective(const Mlp& actor, const Mlp& critic, const Eigen::VectorXd& features,
                       const MaskInputs& mask_in, const std::vector<ChargerSpec>& chargers,
                       MlpGrads* grads = nullptr, std::vector<uint8_t>* pattern = nullptr);

// Charge toward the target at full speed during cheap hours; discharge surplus
// on two-way chargers.  Pure formula; callers clip/repair afterwards.
Action greedy_offpeak(const SimState& state, const std::vector<ChargerSpec>& chargers,
                      double delta_h);

// Deterministic acting pipeline: featurize -> actor -> denormalize -> mask ->
// SoC clip -> building floor.
PolicyFn make_actor_policy(const Mlp& actor, const std::vector<ChargerSpec>& chargers,
                           const Episode& episode, const NormConstants& norm);
// greedy_offpeak + the same non-differentiable tail.
PolicyFn make_override_policy(const std::vector<ChargerSpec>& chargers, const Episode& episode);

struct EvalPoint {
    int step = 0;
    double reward = 0;     // mean held-out episode reward
    double bill_usd = 0;   // mean held-out bill
};

struct TrainResult {
    Mlp actor;
    Mlp critic;
    int steps = 0;           // decision steps taken
    int episodes_run = 0;
    int updates = 0;
    double buffer_oracle_fraction = 0;
    double best_eval_reward = 0;
    std::vector<EvalPoint> eval_history;
    bool early_stopped = false;
};

TrainResult train(const std::vector<Episode>& episodes, const std::vector<ChargerSpec>& chargers,
                  const DdpgConfig& config, const NormConstants& norm,
                  const std::vector<Episode>& holdout = {});

struct EvalRow {
    std::string policy;
    double bill_mean = 0, bill_std = 0;
    double shave_mean = 0, shave_std = 0;  // building-only peak minus policy peak, kW
    double missing_mean = 0;               // kWh
    std::vector<double> bills, shaves, missing;  // per episode, input order
};

struct EvalOptions {
    std::vector<std::string> policies;  // heuristic names, "oracle", "rl"; empty = all
    AssignmentPolicy assignment;
    oracle::Weights weights;
    unsigned long long seed = 0;
    bool greedy_override = true;  // applies to the rl row only
    int jobs = 1;                 // episode-level fan-out; results don't depend on it
};

// Rows sorted by mean bill, cheapest first.
std::vector<EvalRow> evaluate(const std::vector<Episode>& episodes,
                              const std::vector<ChargerSpec>& chargers, const Mlp* actor,
                              const NormConstants& norm, const EvalOptions& opts = {});

// Versioned JSON checkpoint; numbers survive the round trip bit-exactly.
struct Checkpoint {
    Mlp actor;
    NormConstants norm;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace v2b::rl
