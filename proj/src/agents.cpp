#include "fleetrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fleetrl::agents {

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

fleet::ActionVector naive_allocate(const fleet::FleetConfig& fleet, const fleet::SocVector& socs,
                                   int served, Rng& rng) {
    const std::size_t n = fleet.size();
    auto [a_min, a_max] = fleet::aggregate_limits(fleet, socs);
    if (served < a_min || served > a_max)
        throw infeasibility_error("served regulation outside [A_min, A_max]");

    std::int64_t total_capacity = 0;
    for (const auto& u : fleet.units) total_capacity += u.capacity;

    std::vector<int> lo(n), hi(n);
    fleet::ActionVector a(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::tie(lo[i], hi[i]) = fleet::per_battery_bounds(fleet.units[i], socs[i]);
        const double share = static_cast<double>(fleet.units[i].capacity) /
                             static_cast<double>(total_capacity) * served;
        a[i] = std::clamp(static_cast<int>(std::floor(share)), lo[i], hi[i]);
    }

    int sum = std::accumulate(a.begin(), a.end(), 0);
    while (sum != served) {
        const int unit = served > sum ? 1 : -1;
        std::vector<std::size_t> movable;
        for (std::size_t i = 0; i < n; ++i)
            if (a[i] + unit >= lo[i] && a[i] + unit <= hi[i]) movable.push_back(i);
        // served within [A_min, A_max] guarantees some battery can move
        a[movable[rng.uniform_index(movable.size())]] += unit;
        sum += unit;
    }
    return a;
}

const fleet::ActionVector& greedy_select(const std::vector<fleet::ActionVector>& actions,
                                         const fleet::SocVector& socs,
                                         const std::vector<int>& switching_points, double alpha_d,
                                         double beta) {
    if (actions.empty()) throw validation_error("greedy_select needs a non-empty action list");
    std::size_t best = 0;
    double best_reward = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < actions.size(); ++k) {
        const double r =
            env::proxy_reward(socs, switching_points, actions[k], alpha_d, beta).first;
        if (r > best_reward) { // strict: first max wins, list order is lexicographic
            best_reward = r;
            best = k;
        }
    }
    return actions[best];
}

double epsilon_at(std::int64_t t, double epsilon0) {
    return epsilon0 / (1.0 + 0.005 * static_cast<double>(t));
}

// ---------------------------------------------------------------------------
// state-action indexing
// ---------------------------------------------------------------------------

StateActionCodec::StateActionCodec(const fleet::FleetConfig& fleet,
                                   const signal::RegulationAlphabet& alphabet)
    : fleet_(fleet), alphabet_(alphabet) {
    unsigned __int128 states = alphabet.size();
    unsigned __int128 actions = 1;
    for (const auto& u : fleet.units) {
        states *= static_cast<unsigned>(u.capacity + 1);
        actions *= static_cast<unsigned>(u.max_charge + u.max_discharge + 1);
    }
    if (states * actions > std::numeric_limits<std::uint64_t>::max())
        throw validation_error("state-action key space exceeds 64 bits");
    action_radix_ = static_cast<std::uint64_t>(actions);
}

std::uint64_t StateActionCodec::state_key(const fleet::SocVector& socs, int regulation) const {
    std::uint64_t key = alphabet_.index_of(regulation);
    for (std::size_t i = 0; i < fleet_.size(); ++i) {
        key = key * static_cast<std::uint64_t>(fleet_.units[i].capacity + 1) +
              static_cast<std::uint64_t>(socs[i]);
    }
    return key;
}

std::uint64_t StateActionCodec::pair_key(std::uint64_t state, const fleet::ActionVector& a) const {
    std::uint64_t action = 0;
    for (std::size_t i = 0; i < fleet_.size(); ++i) {
        const auto& u = fleet_.units[i];
        action = action * static_cast<std::uint64_t>(u.max_charge + u.max_discharge + 1) +
                 static_cast<std::uint64_t>(a[i] + u.max_discharge);
    }
    return state * action_radix_ + action;
}

std::uint64_t StateActionCodec::key(const fleet::SocVector& socs, int regulation,
                                    const fleet::ActionVector& a) const {
    return pair_key(state_key(socs, regulation), a);
}

// ---------------------------------------------------------------------------
// replay buffer
// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw validation_error("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(Transition tr) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(std::move(tr));
}

std::vector<std::size_t> ReplayBuffer::sample_without_replacement(std::size_t count,
                                                                  Rng& rng) const {
    if (count > data_.size())
        throw validation_error("batch size exceeds buffer contents");
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t j = k + rng.uniform_index(idx.size() - k);
        std::swap(idx[k], idx[j]);
    }
    idx.resize(count);
    return idx;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

Activation activation_from_string(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    throw validation_error("unknown activation: " + name);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "silu";
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::silu: return z / (1.0 + std::exp(-z));
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

Normalizer Normalizer::make(const fleet::FleetConfig& fleet,
                            const signal::RegulationAlphabet& alphabet, double alpha_d,
                            double beta, double reward_scale_override) {
    Normalizer n;
    for (const auto& u : fleet.units) {
        n.capacity_scale.push_back(static_cast<double>(u.capacity));
        n.rate_scale.push_back(static_cast<double>(std::max(u.max_charge, u.max_discharge)));
    }
    n.regulation_scale = std::max(1, alphabet.max_abs());
    n.reward_scale = reward_scale_override > 0.0
                         ? reward_scale_override
                         : alpha_d * (std::exp(beta) - 1.0) * static_cast<double>(fleet.size());
    return n;
}

void build_input(const fleet::SocVector& socs, int regulation, const fleet::ActionVector& a,
                 double one_step_reward, const std::vector<int>& switching_points,
                 const Normalizer& norm, std::span<double> out, long* clamp_count) {
    const std::size_t n = socs.size();
    if (a.size() != n || switching_points.size() != n || norm.capacity_scale.size() != n)
        throw validation_error("build_input: mismatched vector lengths");
    if (out.size() != 3 * n + 2) throw validation_error("build_input: output must have size 3N+2");

    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) out[k++] = socs[i] / norm.capacity_scale[i];
    out[k++] = regulation / norm.regulation_scale;
    for (std::size_t i = 0; i < n; ++i) out[k++] = a[i] / norm.rate_scale[i];
    double r = one_step_reward / norm.reward_scale;
    if (r > 1.0 || r < -1.0) {
        r = std::clamp(r, -1.0, 1.0);
        if (clamp_count) ++*clamp_count;
    }
    out[k++] = r;
    for (std::size_t i = 0; i < n; ++i) out[k++] = switching_points[i] / norm.capacity_scale[i];
}

ElmFeatureMap ElmFeatureMap::make(int d, int p, Activation activation, std::uint64_t seed) {
    if (d < 1 || p < 1) throw validation_error("feature map needs d >= 1 and p >= 1");
    ElmFeatureMap m;
    m.d = d;
    m.p = p;
    m.activation = activation;
    m.seed = seed;
    m.weights.resize(static_cast<std::size_t>(d) * p);
    m.bias.resize(d);
    Rng rng(seed);
    for (int j = 0; j < d; ++j) {
        for (int k = 0; k < p; ++k)
            m.weights[static_cast<std::size_t>(j) * p + k] = rng.uniform(-1.0, 1.0);
        m.bias[j] = rng.uniform(-1.0, 1.0);
    }
    return m;
}

void ElmFeatureMap::features(std::span<const double> x, std::span<double> phi) const {
    if (x.size() != static_cast<std::size_t>(p) || phi.size() != static_cast<std::size_t>(d))
        throw validation_error("feature map: dimension mismatch");
    for (int j = 0; j < d; ++j) {
        const double* row = &weights[static_cast<std::size_t>(j) * p];
        double z = bias[j];
        for (int k = 0; k < p; ++k) z += row[k] * x[k];
        phi[j] = activate(activation, z);
    }
}

double q_hat(std::span<const double> w, std::span<const double> phi) {
    if (w.size() != phi.size()) throw validation_error("q_hat: dimension mismatch");
    double q = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) q += w[j] * phi[j];
    return q;
}

// ---------------------------------------------------------------------------
// baseline policies
// ---------------------------------------------------------------------------

std::size_t NaivePolicy::choose(const env::EnvState& state, int served,
                                const std::vector<fleet::ActionVector>& feasible,
                                const std::vector<int>&, std::int64_t, Rng& rng) {
    const auto a = naive_allocate(fleet_, state.socs, served, rng);
    const auto it = std::lower_bound(feasible.begin(), feasible.end(), a);
    if (it == feasible.end() || *it != a)
        throw validation_error("naive allocation missing from the feasible list");
    return static_cast<std::size_t>(it - feasible.begin());
}

std::size_t GreedyPolicy::choose(const env::EnvState& state, int,
                                 const std::vector<fleet::ActionVector>& feasible,
                                 const std::vector<int>& switching_points, std::int64_t, Rng&) {
    const auto& best = greedy_select(feasible, state.socs, switching_points, alpha_d_, beta_);
    return static_cast<std::size_t>(&best - feasible.data());
}

// ---------------------------------------------------------------------------
// tabular Q-learning
// ---------------------------------------------------------------------------

TabularQAgent::TabularQAgent(const fleet::FleetConfig& fleet,
                             const signal::RegulationAlphabet& alphabet, double alpha_d,
                             double beta, TabularQConfig config)
    : fleet_(fleet), codec_(fleet, alphabet), cfg_(config), alpha_d_(alpha_d), beta_(beta) {
    const auto pairs = fleet::count_state_action_pairs(fleet, alphabet);
    if (pairs > cfg_.pair_cap)
        throw validation_error("state-action table size " + std::to_string(pairs) +
                               " exceeds the tabular cap " + std::to_string(cfg_.pair_cap));
}

double TabularQAgent::q_value(const fleet::SocVector& socs, int regulation,
                              const fleet::ActionVector& a) const {
    const auto it = q_.find(codec_.key(socs, regulation, a));
    return it == q_.end() ? 0.0 : it->second;
}

std::size_t TabularQAgent::choose(const env::EnvState& state, int,
                                  const std::vector<fleet::ActionVector>& feasible,
                                  const std::vector<int>&, std::int64_t t, Rng& rng) {
    if (!eval_mode_ && rng.uniform01() < epsilon_at(t, cfg_.epsilon0))
        return rng.uniform_index(feasible.size());
    std::size_t best = 0;
    double best_q = -std::numeric_limits<double>::infinity();
    const std::uint64_t state_key = codec_.state_key(state.socs, state.regulation);
    for (std::size_t k = 0; k < feasible.size(); ++k) {
        const auto it = q_.find(codec_.pair_key(state_key, feasible[k]));
        const double q = it == q_.end() ? 0.0 : it->second;
        if (q > best_q) {
            best_q = q;
            best = k;
        }
    }
    return best;
}

void TabularQAgent::update(const fleet::SocVector& socs, int regulation,
                           const fleet::ActionVector& a, double reward,
                           const fleet::SocVector& next_socs, int next_regulation,
                           const std::vector<fleet::ActionVector>& next_feasible) {
    const std::uint64_t key = codec_.key(socs, regulation, a);
    const std::uint64_t visits = ++visits_[key];
    const double alpha_t = cfg_.base_alpha / static_cast<double>(visits);

    double best_next = 0.0; // max over an empty set is 0
    if (!next_feasible.empty()) {
        best_next = -std::numeric_limits<double>::infinity();
        const std::uint64_t next_state = codec_.state_key(next_socs, next_regulation);
        for (const auto& na : next_feasible) {
            const auto it = q_.find(codec_.pair_key(next_state, na));
            best_next = std::max(best_next, it == q_.end() ? 0.0 : it->second);
        }
    }
    double& q = q_[key];
    q += alpha_t * (reward + cfg_.gamma * best_next - q);
}

void TabularQAgent::observe(const Transition& tr) {
    if (eval_mode_) return;
    const auto next_feasible = [&] {
        auto [a_min, a_max] = fleet::aggregate_limits(fleet_, tr.next_socs);
        const int served = fleet::served_regulation(tr.next_regulation, a_min, a_max);
        return fleet::enumerate_actions(fleet_, tr.next_socs, served);
    }();
    update(tr.socs, tr.regulation, tr.action, tr.reward, tr.next_socs, tr.next_regulation,
           tr.terminal ? std::vector<fleet::ActionVector>{} : next_feasible);
}

// ---------------------------------------------------------------------------
// ELM agent
// ---------------------------------------------------------------------------

ElmAgent::ElmAgent(const fleet::FleetConfig& fleet, const signal::RegulationAlphabet& alphabet,
                   double alpha_d, double beta, ElmAgentConfig config)
    : fleet_(fleet),
      codec_(fleet, alphabet),
      cfg_(config),
      alpha_d_(alpha_d),
      beta_(beta),
      norm_(Normalizer::make(fleet, alphabet, alpha_d, beta, config.reward_scale_override)),
      features_(ElmFeatureMap::make(config.d, static_cast<int>(3 * fleet.size() + 2),
                                    config.activation, config.feature_seed)),
      w_(static_cast<std::size_t>(config.d), 0.0),
      buffer_(config.buffer_capacity) {
    if (cfg_.batch_size > cfg_.buffer_capacity)
        throw validation_error("batch size must not exceed buffer capacity");
}

void ElmAgent::action_values(const fleet::SocVector& socs, int regulation,
                             const std::vector<fleet::ActionVector>& actions,
                             const std::vector<int>& switching_points, std::span<double> out,
                             bool parallel) const {
    const std::size_t count = actions.size();
    if (out.size() != count) throw validation_error("action_values: output size mismatch");
    const int p = features_.p;
    const int d = features_.d;
    long clamps = 0;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : clamps) if (parallel && count >= 64)
#endif
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> x(static_cast<std::size_t>(p));
        std::vector<double> phi(static_cast<std::size_t>(d));
        long local_clamps = 0;
        const double r =
            env::proxy_reward(socs, switching_points, actions[k], alpha_d_, beta_).first;
        build_input(socs, regulation, actions[k], r, switching_points, norm_, x, &local_clamps);
        features_.features(x, phi);
        out[k] = q_hat(w_, phi);
        clamps += local_clamps;
    }
#ifdef _OPENMP
#pragma omp atomic
#endif
    clamp_events_ += clamps;
}

std::size_t ElmAgent::choose(const env::EnvState& state, int,
                             const std::vector<fleet::ActionVector>& feasible,
                             const std::vector<int>& switching_points, std::int64_t t, Rng& rng) {
    if (!eval_mode_ && rng.uniform01() < epsilon_at(t, cfg_.epsilon0))
        return rng.uniform_index(feasible.size());
    std::vector<double> q(feasible.size());
    action_values(state.socs, state.regulation, feasible, switching_points, q, parallel_);
    std::size_t best = 0;
    for (std::size_t k = 1; k < q.size(); ++k)
        if (q[k] > q[best]) best = k; // ties keep the lexicographically first action
    return best;
}

double ElmAgent::best_next_q(const Transition& tr) const {
    if (tr.terminal) return 0.0;
    auto [a_min, a_max] = fleet::aggregate_limits(fleet_, tr.next_socs);
    const int served = fleet::served_regulation(tr.next_regulation, a_min, a_max);
    const auto next_actions = fleet::enumerate_actions(fleet_, tr.next_socs, served);
    std::vector<double> q(next_actions.size());
    // inner evaluation stays serial; the batch loop above is the parallel axis
    action_values(tr.next_socs, tr.next_regulation, next_actions, tr.next_switching_points, q,
                  false);
    return *std::max_element(q.begin(), q.end());
}

double ElmAgent::td_error(const Transition& tr, std::span<double> phi_scratch) const {
    std::vector<double> x(static_cast<std::size_t>(features_.p));
    long clamps = 0;
    build_input(tr.socs, tr.regulation, tr.action, tr.reward, tr.switching_points, norm_, x,
                &clamps);
    features_.features(x, phi_scratch);
#ifdef _OPENMP
#pragma omp atomic
#endif
    clamp_events_ += clamps;
    return tr.reward + cfg_.gamma * best_next_q(tr) - q_hat(w_, phi_scratch);
}

void ElmAgent::minibatch_update(const std::vector<std::size_t>& batch_indices, double alpha_t) {
    const std::size_t m = batch_indices.size();
    if (m == 0) throw validation_error("minibatch must be non-empty");
    const std::size_t d = static_cast<std::size_t>(features_.d);
    std::vector<double> phis(m * d);
    std::vector<double> errors(m);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel_ && m >= 16)
#endif
    for (std::size_t k = 0; k < m; ++k)
        errors[k] = td_error(buffer_[batch_indices[k]], {phis.data() + k * d, d});

    // accumulate in batch order so the result is independent of thread count
    std::vector<double> grad(d, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < d; ++j) grad[j] += errors[k] * phis[k * d + j];
    const double scale = alpha_t / static_cast<double>(m);
    for (std::size_t j = 0; j < d; ++j) w_[j] += scale * grad[j];
    ++updates_;
}

void ElmAgent::observe(const Transition& tr) {
    if (eval_mode_) return;
    ++visits_[codec_.key(tr.socs, tr.regulation, tr.action)];
    buffer_.push(tr);
    ++steps_seen_;
    if (steps_seen_ % cfg_.update_period != 0 || buffer_.size() < cfg_.batch_size) return;

    Rng batch_rng(fnv1a_u64(static_cast<std::uint64_t>(steps_seen_),
                            fnv1a_u64(features_.seed)));
    const auto batch = buffer_.sample_without_replacement(cfg_.batch_size, batch_rng);

    double alpha_t;
    if (cfg_.lr_mode == LearningRateMode::visit_mean) {
        double mean_visits = 0.0;
        for (const auto idx : batch) {
            const auto& b = buffer_[idx];
            const auto it = visits_.find(codec_.key(b.socs, b.regulation, b.action));
            mean_visits += it == visits_.end() ? 1.0 : static_cast<double>(it->second);
        }
        mean_visits /= static_cast<double>(batch.size());
        alpha_t = cfg_.base_alpha / mean_visits;
    } else {
        alpha_t = cfg_.base_alpha / (1.0 + cfg_.lr_kappa * static_cast<double>(updates_));
    }
    minibatch_update(batch, alpha_t);
}

// ---------------------------------------------------------------------------
// checkpointing (hex floats round-trip bit-exactly)
// ---------------------------------------------------------------------------

namespace {

void write_doubles(std::ostream& out, const std::vector<double>& values) {
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", values[i]);
        out << (i ? " " : "") << buf;
    }
    out << "\n";
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
    std::vector<double> values(count);
    std::string tok;
    for (std::size_t i = 0; i < count; ++i) {
        if (!(in >> tok)) throw validation_error("checkpoint truncated");
        values[i] = std::strtod(tok.c_str(), nullptr);
    }
    return values;
}

} // namespace

void ElmAgent::save_checkpoint(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f << "fleetrl-checkpoint v1\n";
    f << "seed " << features_.seed << "\n";
    f << "d " << features_.d << "\n";
    f << "p " << features_.p << "\n";
    f << "activation " << to_string(features_.activation) << "\n";
    write_doubles(f, features_.weights);
    write_doubles(f, features_.bias);
    write_doubles(f, w_);
    write_doubles(f, norm_.capacity_scale);
    write_doubles(f, norm_.rate_scale);
    write_doubles(f, {norm_.regulation_scale, norm_.reward_scale});
}

ElmAgent ElmAgent::load_checkpoint(const std::string& path, const fleet::FleetConfig& fleet,
                                   const signal::RegulationAlphabet& alphabet, double alpha_d,
                                   double beta) {
    std::ifstream f(path);
    if (!f) throw validation_error("cannot open checkpoint " + path);
    std::string magic, version;
    f >> magic >> version;
    if (magic != "fleetrl-checkpoint" || version != "v1")
        throw validation_error("unrecognized checkpoint format");
    std::string key;
    std::uint64_t seed;
    int d, p;
    std::string activation;
    f >> key >> seed >> key >> d >> key >> p >> key >> activation;

    ElmAgentConfig cfg;
    cfg.d = d;
    cfg.activation = activation_from_string(activation);
    cfg.feature_seed = seed;
    ElmAgent agent(fleet, alphabet, alpha_d, beta, cfg);
    if (agent.features_.p != p)
        throw validation_error("checkpoint input dimension does not match the fleet");

    agent.features_.weights = read_doubles(f, static_cast<std::size_t>(d) * p);
    agent.features_.bias = read_doubles(f, static_cast<std::size_t>(d));
    agent.w_ = read_doubles(f, static_cast<std::size_t>(d));
    agent.norm_.capacity_scale = read_doubles(f, fleet.size());
    agent.norm_.rate_scale = read_doubles(f, fleet.size());
    const auto tail = read_doubles(f, 2);
    agent.norm_.regulation_scale = tail[0];
    agent.norm_.reward_scale = tail[1];
    return agent;
}

// ---------------------------------------------------------------------------
// training driver
// ---------------------------------------------------------------------------

TrainLog train(env::Environment& environment, Policy& agent, std::int64_t total_steps, Rng& rng) {
    TrainLog log;
    agent.set_eval_mode(false);
    double window = 0.0;
    for (std::int64_t t = 0; t < total_steps; ++t) {
        if (environment.done()) {
            log.truncated = true;
            break;
        }
        const auto& state = environment.state();
        auto [served, feasible] = environment.feasible();
        const auto sps = environment.switching_points();
        const std::size_t pick = agent.choose(state, served, feasible, sps, t, rng);

        Transition tr;
        tr.socs = state.socs;
        tr.regulation = state.regulation;
        tr.switching_points = sps;
        tr.action = feasible[pick];
        const auto outcome = environment.step(feasible[pick]);
        tr.reward = outcome.reward;
        tr.next_socs = outcome.next_state.socs;
        tr.next_regulation = outcome.next_state.regulation;
        tr.next_switching_points = environment.switching_points();
        tr.terminal = outcome.episode_end;
        agent.observe(tr);

        window += outcome.reward;
        log.total_reward += outcome.reward;
        ++log.steps;
        if (log.steps % log.window_size == 0) {
            log.window_rewards.push_back(window);
            window = 0.0;
        }
    }
    if (log.steps % log.window_size != 0) log.window_rewards.push_back(window);
    return log;
}

} // namespace fleetrl::agents
