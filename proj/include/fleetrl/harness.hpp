#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetrl/agents.hpp"
#include "fleetrl/common.hpp"
#include "fleetrl/cycles.hpp"
#include "fleetrl/env.hpp"

namespace fleetrl::harness {

enum class AgentKind { naive, greedy, tabular, elm };
AgentKind agent_kind_from_string(const std::string& name);
std::string to_string(AgentKind kind);

struct SeedSet {
    std::uint64_t signal = 0;
    std::uint64_t elm = 0;
    std::uint64_t exploration = 0;
    std::uint64_t naive_remainder = 0;
    std::uint64_t eval_signal = 0;
};

struct ExperimentConfig {
    fleet::FleetConfig fleet;

    // signal source
    bool markov_mode = true;
    std::optional<signal::MarkovSignalModel> markov; // uniform default when only an alphabet is given
    std::optional<signal::TraceSignal> trace;
    bool trace_as_markov = false; // fit a chain from the trace instead of replaying it

    double alpha_d = 0.01;
    double beta = 1.0;
    double gamma = 0.95;
    std::int64_t horizon = 100'000;
    std::int64_t train_steps = 100'000;
    env::InitialSocPolicy initial_soc = env::HalfCapacityInitialSoc{};
    bool record_trajectory = false;
    bool reuse_signal_for_eval = false;

    AgentKind agent = AgentKind::naive;
    agents::ElmAgentConfig elm;
    agents::TabularQConfig tabular;

    SeedSet seeds;

    cycles::StressModel eval_stress = cycles::StressModel::default_rational();
    std::vector<double> histogram_edges = cycles::default_bin_edges();

    signal::RegulationAlphabet alphabet() const;
    env::EnvConfig env_config() const;
};

// Plain-text sectioned key-value config file.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");

struct RunReport {
    std::string agent;
    double accumulated_reward = 0.0;
    std::vector<double> per_battery_degradation;
    std::vector<double> cycle_counts; // weighted: full 1, residual half 0.5
    std::vector<cycles::Histogram> dod_histograms;
    long clipping_events = 0;
    double wall_time_seconds = 0.0;
    std::uint64_t signal_checksum = 0; // FNV over the evaluated regulation sequence
    bool truncated = false;
    std::int64_t eval_steps = 0;
    // full per-battery SoC trajectories from the evaluation run
    std::vector<std::vector<int>> trajectories;
    std::vector<int> regulation_trace;
    std::vector<int> served_trace;
};

// Train (when the agent learns), then evaluate greedily over the horizon.
// Degradation is recomputed offline from the full SoC trajectories with the
// evaluation stress model.
RunReport run_experiment(const ExperimentConfig& config);

// Evaluate a ready-made policy (no training) on the config's evaluation signal.
RunReport evaluate_policy(const ExperimentConfig& config, agents::Policy& policy,
                          std::uint64_t eval_seed);

// One report per agent on the same signal realization. Exploration and
// remainder seeds derive from the agent name, so rows do not depend on the
// order in which agents are listed.
std::vector<RunReport> compare_policies(const ExperimentConfig& config,
                                        const std::vector<AgentKind>& agent_kinds,
                                        bool parallel_runs = true);

void write_report_csv(const std::vector<RunReport>& reports, const std::string& path);
void emit_histogram_csv(const RunReport& report, const std::string& path);
void write_trajectory_csv(const RunReport& report, const std::string& path);
void write_ledger_csv(const cycles::CycleLedger& ledger, const std::string& path);
void write_histogram_csv(const cycles::Histogram& hist, const std::string& path);

} // namespace fleetrl::harness
