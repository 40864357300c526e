#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "fleetrl/common.hpp"
#include "fleetrl/cycles.hpp"
#include "fleetrl/fleet.hpp"
#include "fleetrl/signal.hpp"

namespace fleetrl::env {

struct FixedInitialSoc {
    fleet::SocVector socs;
};
struct UniformInitialSoc {};
struct HalfCapacityInitialSoc {};
using InitialSocPolicy = std::variant<HalfCapacityInitialSoc, FixedInitialSoc, UniformInitialSoc>;

// Signal source: sampled Markov chain, or replay of a discretized trace
// treated as a single episode.
struct TraceReplay {
    signal::TraceSignal trace;
};
using SignalSource = std::variant<signal::MarkovSignalModel, TraceReplay>;

struct EnvConfig {
    fleet::FleetConfig fleet;
    SignalSource source;
    double alpha_d = 0.01; // proxy reward scale
    double beta = 1.0;     // proxy reward exponent
    double gamma = 0.95;   // discount, carried for the learning agents
    InitialSocPolicy initial_soc = HalfCapacityInitialSoc{};

    void validate() const;
    signal::RegulationAlphabet alphabet() const;
};

struct EnvState {
    fleet::SocVector socs;
    int regulation = 0;
    std::int64_t t = 0;
};

struct StepOutcome {
    double reward = 0.0;
    std::vector<double> per_battery_rewards;
    int served = 0;
    std::vector<cycles::CycleRecord> completed_cycles;
    EnvState next_state;
    bool episode_end = false; // trace exhausted
};

// Per-battery degradation proxy: the change in exp(beta * |soc - sp|) caused
// by the action, negated. Switching points are the pre-step ones.
std::pair<double, std::vector<double>> proxy_reward(const fleet::SocVector& socs,
                                                    const std::vector<int>& switching_points,
                                                    const fleet::ActionVector& a, double alpha_d,
                                                    double beta);

class Environment {
  public:
    Environment(EnvConfig config, std::uint64_t seed);

    void reset(std::uint64_t seed);

    const EnvState& state() const { return state_; }
    const fleet::FleetConfig& fleet_config() const { return config_.fleet; }
    const EnvConfig& config() const { return config_; }
    bool done() const { return done_; }

    std::vector<int> switching_points() const;

    // Served regulation for the current state plus the full feasible action
    // list in lexicographic order.
    std::pair<int, std::vector<fleet::ActionVector>> feasible() const;

    // Reward (pre-step switching points), SoC update, tracker pushes,
    // signal advance -- in that order.
    StepOutcome step(const fleet::ActionVector& a);

    long clipping_events() const { return clipping_events_; }

  private:
    EnvConfig config_;
    EnvState state_;
    std::vector<cycles::TurningPointTracker> trackers_;
    Rng signal_rng_;
    std::size_t trace_pos_ = 0;
    bool done_ = false;
    long clipping_events_ = 0;
};

} // namespace fleetrl::env
