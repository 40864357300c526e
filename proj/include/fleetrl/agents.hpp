#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fleetrl/common.hpp"
#include "fleetrl/env.hpp"

namespace fleetrl::agents {

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

// Capacity-proportional split of the served regulation. The floor residue is
// handed out one unit at a time to uniformly random batteries that can still
// move in the needed direction.
fleet::ActionVector naive_allocate(const fleet::FleetConfig& fleet, const fleet::SocVector& socs,
                                   int served, Rng& rng);

// Myopic choice: the feasible action with the best one-step proxy reward,
// first-in-list on ties.
const fleet::ActionVector& greedy_select(const std::vector<fleet::ActionVector>& actions,
                                         const fleet::SocVector& socs,
                                         const std::vector<int>& switching_points, double alpha_d,
                                         double beta);

// epsilon_t = epsilon0 / (1 + 0.005 t)
double epsilon_at(std::int64_t t, double epsilon0);

// ---------------------------------------------------------------------------
// state-action indexing (visit counters, tabular keys)
// ---------------------------------------------------------------------------

// Mixed-radix packing of (socs, regulation index, action) into one key.
// Collision-free as long as the packed ranges fit 64 bits.
class StateActionCodec {
  public:
    StateActionCodec(const fleet::FleetConfig& fleet, const signal::RegulationAlphabet& alphabet);

    std::uint64_t state_key(const fleet::SocVector& socs, int regulation) const;
    std::uint64_t key(const fleet::SocVector& socs, int regulation,
                      const fleet::ActionVector& a) const;
    std::uint64_t pair_key(std::uint64_t state, const fleet::ActionVector& a) const;

  private:
    fleet::FleetConfig fleet_;
    signal::RegulationAlphabet alphabet_;
    std::uint64_t action_radix_;
};

// ---------------------------------------------------------------------------
// transitions
// ---------------------------------------------------------------------------

// One environment interaction, with enough context on both ends to
// re-enumerate feasible actions and rebuild features during replay.
struct Transition {
    fleet::SocVector socs;
    int regulation = 0;
    std::vector<int> switching_points;
    fleet::ActionVector action;
    double reward = 0.0;
    fleet::SocVector next_socs;
    int next_regulation = 0;
    std::vector<int> next_switching_points;
    bool terminal = false;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(Transition tr);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }
    // uniform sample of `count` distinct indices (partial Fisher-Yates)
    std::vector<std::size_t> sample_without_replacement(std::size_t count, Rng& rng) const;

  private:
    std::size_t capacity_;
    std::deque<Transition> data_;
};

// ---------------------------------------------------------------------------
// feature machinery
// ---------------------------------------------------------------------------

enum class Activation { silu, relu, sigmoid };
Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct Normalizer {
    std::vector<double> capacity_scale; // B_i
    std::vector<double> rate_scale;     // max(c_i, d_i)
    double regulation_scale = 1.0;      // max |alphabet value|
    double reward_scale = 1.0;

    // reward_scale_override <= 0 selects the default alpha_d*(e^beta - 1)*N
    static Normalizer make(const fleet::FleetConfig& fleet,
                           const signal::RegulationAlphabet& alphabet, double alpha_d, double beta,
                           double reward_scale_override = 0.0);
};

// [soc_i/B_i..., r/r_scale, a_i/rate_i..., reward/reward_scale, sp_i/B_i...],
// length 3N+2. The reward component is clamped to [-1,1]; clamps are counted.
void build_input(const fleet::SocVector& socs, int regulation, const fleet::ActionVector& a,
                 double one_step_reward, const std::vector<int>& switching_points,
                 const Normalizer& norm, std::span<double> out, long* clamp_count = nullptr);

// Random single-hidden-layer feature map; input weights and biases are drawn
// once from U[-1,1] and frozen. Units are drawn one at a time (row, then
// bias) so maps of growing width share their leading units for a fixed seed.
struct ElmFeatureMap {
    int d = 0;
    int p = 0;
    Activation activation = Activation::silu;
    std::uint64_t seed = 0;
    std::vector<double> weights; // d x p, row-major
    std::vector<double> bias;    // d

    static ElmFeatureMap make(int d, int p, Activation activation, std::uint64_t seed);
    void features(std::span<const double> x, std::span<double> phi) const;
};

double activate(Activation a, double z);

double q_hat(std::span<const double> w, std::span<const double> phi);

// ---------------------------------------------------------------------------
// agents
// ---------------------------------------------------------------------------

class Policy {
  public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    // pick an index into `feasible`
    virtual std::size_t choose(const env::EnvState& state, int served,
                               const std::vector<fleet::ActionVector>& feasible,
                               const std::vector<int>& switching_points, std::int64_t t,
                               Rng& rng) = 0;
    virtual void observe(const Transition&) {}
    virtual void set_eval_mode(bool) {}
    virtual bool is_learner() const { return false; }
};

class NaivePolicy : public Policy {
  public:
    explicit NaivePolicy(fleet::FleetConfig fleet) : fleet_(std::move(fleet)) {}
    std::string name() const override { return "naive"; }
    std::size_t choose(const env::EnvState& state, int served,
                       const std::vector<fleet::ActionVector>& feasible,
                       const std::vector<int>& switching_points, std::int64_t t,
                       Rng& rng) override;

  private:
    fleet::FleetConfig fleet_;
};

class GreedyPolicy : public Policy {
  public:
    GreedyPolicy(double alpha_d, double beta) : alpha_d_(alpha_d), beta_(beta) {}
    std::string name() const override { return "greedy"; }
    std::size_t choose(const env::EnvState& state, int served,
                       const std::vector<fleet::ActionVector>& feasible,
                       const std::vector<int>& switching_points, std::int64_t t,
                       Rng& rng) override;

  private:
    double alpha_d_, beta_;
};

struct TabularQConfig {
    double base_alpha = 1e-4; // alpha_t = base_alpha / N_t(s,a)
    double gamma = 0.95;
    double epsilon0 = 0.6;
    std::int64_t pair_cap = 1'000'000; // refuse larger state-action tables
};

class TabularQAgent : public Policy {
  public:
    TabularQAgent(const fleet::FleetConfig& fleet, const signal::RegulationAlphabet& alphabet,
                  double alpha_d, double beta, TabularQConfig config);

    std::string name() const override { return "tabular"; }
    std::size_t choose(const env::EnvState& state, int served,
                       const std::vector<fleet::ActionVector>& feasible,
                       const std::vector<int>& switching_points, std::int64_t t,
                       Rng& rng) override;
    void observe(const Transition& tr) override;
    void set_eval_mode(bool eval) override { eval_mode_ = eval; }
    bool is_learner() const override { return true; }

    double q_value(const fleet::SocVector& socs, int regulation,
                   const fleet::ActionVector& a) const;
    std::size_t table_size() const { return q_.size(); }

    // single Bellman update with the Robbins-Monro visit schedule
    void update(const fleet::SocVector& socs, int regulation, const fleet::ActionVector& a,
                double reward, const fleet::SocVector& next_socs, int next_regulation,
                const std::vector<fleet::ActionVector>& next_feasible);

  private:
    fleet::FleetConfig fleet_;
    StateActionCodec codec_;
    TabularQConfig cfg_;
    double alpha_d_, beta_;
    std::unordered_map<std::uint64_t, double> q_;
    std::unordered_map<std::uint64_t, std::uint64_t> visits_;
    bool eval_mode_ = false;
};

enum class LearningRateMode { visit_mean, global_decay };

struct ElmAgentConfig {
    int d = 50;
    Activation activation = Activation::silu;
    std::size_t buffer_capacity = 2000;
    std::size_t batch_size = 128;
    std::int64_t update_period = 8;
    double epsilon0 = 0.6;
    double gamma = 0.95;
    LearningRateMode lr_mode = LearningRateMode::visit_mean;
    double base_alpha = 1e-4; // visit mode: alpha_t = base_alpha / mean batch visits
    double lr_kappa = 1e-3;   // global mode: alpha_t = base_alpha / (1 + kappa * updates)
    double reward_scale_override = 0.0;
    std::uint64_t feature_seed = 0;
};

class ElmAgent : public Policy {
  public:
    ElmAgent(const fleet::FleetConfig& fleet, const signal::RegulationAlphabet& alphabet,
             double alpha_d, double beta, ElmAgentConfig config);

    std::string name() const override { return "elm"; }
    std::size_t choose(const env::EnvState& state, int served,
                       const std::vector<fleet::ActionVector>& feasible,
                       const std::vector<int>& switching_points, std::int64_t t,
                       Rng& rng) override;
    void observe(const Transition& tr) override;
    void set_eval_mode(bool eval) override { eval_mode_ = eval; }
    bool is_learner() const override { return true; }

    // Q estimates for each candidate action; `parallel` controls the OpenMP
    // path, results are identical either way.
    void action_values(const fleet::SocVector& socs, int regulation,
                       const std::vector<fleet::ActionVector>& actions,
                       const std::vector<int>& switching_points, std::span<double> out,
                       bool parallel = true) const;

    // Semi-gradient TD step over one minibatch; every TD error is evaluated
    // with the pre-update weights.
    void minibatch_update(const std::vector<std::size_t>& batch_indices, double alpha_t);

    double td_error(const Transition& tr, std::span<double> phi_scratch) const;

    const std::vector<double>& output_weights() const { return w_; }
    const ElmFeatureMap& feature_map() const { return features_; }
    const Normalizer& normalizer() const { return norm_; }
    const ElmAgentConfig& config() const { return cfg_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    long reward_clamp_events() const { return clamp_events_; }
    std::int64_t updates_applied() const { return updates_; }
    void set_parallel(bool on) { parallel_ = on; }

    void save_checkpoint(const std::string& path) const;
    static ElmAgent load_checkpoint(const std::string& path, const fleet::FleetConfig& fleet,
                                    const signal::RegulationAlphabet& alphabet, double alpha_d,
                                    double beta);

  private:
    fleet::FleetConfig fleet_;
    StateActionCodec codec_;
    ElmAgentConfig cfg_;
    double alpha_d_, beta_;
    Normalizer norm_;
    ElmFeatureMap features_;
    std::vector<double> w_;
    ReplayBuffer buffer_;
    std::unordered_map<std::uint64_t, std::uint64_t> visits_;
    std::int64_t steps_seen_ = 0;
    std::int64_t updates_ = 0;
    mutable long clamp_events_ = 0; // updated with atomic adds in parallel regions
    bool eval_mode_ = false;
    bool parallel_ = true;

    double best_next_q(const Transition& tr) const;
};

// ---------------------------------------------------------------------------
// training driver
// ---------------------------------------------------------------------------

struct TrainLog {
    std::int64_t steps = 0;
    bool truncated = false; // trace ran out before total_steps
    std::vector<double> window_rewards;
    std::int64_t window_size = 1000;
    double total_reward = 0.0;
};

TrainLog train(env::Environment& environment, Policy& agent, std::int64_t total_steps, Rng& rng);

} // namespace fleetrl::agents
