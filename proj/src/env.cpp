#include "fleetrl/env.hpp"

#include <cmath>
#include <tuple>

namespace fleetrl::env {

void EnvConfig::validate() const {
    if (alpha_d <= 0.0 || beta <= 0.0)
        throw validation_error("reward parameters alpha_d, beta must be > 0");
    if (gamma <= 0.0 || gamma >= 1.0) throw validation_error("gamma must lie in (0, 1)");
    if (const auto* fixed = std::get_if<FixedInitialSoc>(&initial_soc))
        fleet::validate_socs(fleet, fixed->socs);
    if (const auto* replay = std::get_if<TraceReplay>(&source)) {
        if (replay->trace.samples.size() < 2)
            throw validation_error("trace replay needs at least 2 samples");
    }
}

signal::RegulationAlphabet EnvConfig::alphabet() const {
    if (const auto* markov = std::get_if<signal::MarkovSignalModel>(&source))
        return markov->alphabet;
    return signal::alphabet_of(std::get<TraceReplay>(source).trace);
}

std::pair<double, std::vector<double>> proxy_reward(const fleet::SocVector& socs,
                                                    const std::vector<int>& switching_points,
                                                    const fleet::ActionVector& a, double alpha_d,
                                                    double beta) {
    const std::size_t n = socs.size();
    if (switching_points.size() != n || a.size() != n)
        throw validation_error("proxy_reward: mismatched vector lengths");
    std::vector<double> per(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int dev_after = std::abs(socs[i] + a[i] - switching_points[i]);
        const int dev_before = std::abs(socs[i] - switching_points[i]);
        per[i] = -alpha_d * (std::exp(beta * dev_after) - std::exp(beta * dev_before));
        total += per[i];
    }
    return {total, std::move(per)};
}

Environment::Environment(EnvConfig config, std::uint64_t seed)
    : config_(std::move(config)), signal_rng_(seed) {
    config_.validate();
    reset(seed);
}

void Environment::reset(std::uint64_t seed) {
    signal_rng_ = Rng(seed);
    done_ = false;
    trace_pos_ = 0;
    clipping_events_ = 0;

    const std::size_t n = config_.fleet.size();
    state_.socs.assign(n, 0);
    if (std::holds_alternative<HalfCapacityInitialSoc>(config_.initial_soc)) {
        for (std::size_t i = 0; i < n; ++i) state_.socs[i] = config_.fleet.units[i].capacity / 2;
    } else if (const auto* fixed = std::get_if<FixedInitialSoc>(&config_.initial_soc)) {
        fleet::validate_socs(config_.fleet, fixed->socs);
        state_.socs = fixed->socs;
    } else {
        for (std::size_t i = 0; i < n; ++i)
            state_.socs[i] = signal_rng_.uniform_int(0, config_.fleet.units[i].capacity);
    }

    if (const auto* markov = std::get_if<signal::MarkovSignalModel>(&config_.source)) {
        // initial regulation drawn uniformly over the alphabet
        state_.regulation =
            markov->alphabet.values[signal_rng_.uniform_index(markov->alphabet.size())];
    } else {
        state_.regulation = std::get<TraceReplay>(config_.source).trace.samples[0];
    }
    state_.t = 0;

    trackers_.clear();
    trackers_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) trackers_.emplace_back(state_.socs[i]);
}

std::vector<int> Environment::switching_points() const {
    std::vector<int> sps(trackers_.size());
    for (std::size_t i = 0; i < trackers_.size(); ++i) sps[i] = trackers_[i].switching_point();
    return sps;
}

std::pair<int, std::vector<fleet::ActionVector>> Environment::feasible() const {
    auto [a_min, a_max] = fleet::aggregate_limits(config_.fleet, state_.socs);
    const int served = fleet::served_regulation(state_.regulation, a_min, a_max);
    return {served, fleet::enumerate_actions(config_.fleet, state_.socs, served)};
}

StepOutcome Environment::step(const fleet::ActionVector& a) {
    if (done_) throw validation_error("step() after episode end");
    auto [a_min, a_max] = fleet::aggregate_limits(config_.fleet, state_.socs);
    const int served = fleet::served_regulation(state_.regulation, a_min, a_max);
    if (served != state_.regulation) ++clipping_events_;

    int sum = 0;
    for (int ai : a) sum += ai;
    if (sum != served)
        throw infeasibility_error("action does not sum to the served regulation");

    StepOutcome out;
    out.served = served;

    auto sps = switching_points();
    std::tie(out.reward, out.per_battery_rewards) =
        proxy_reward(state_.socs, sps, a, config_.alpha_d, config_.beta);

    state_.socs = fleet::apply_action(config_.fleet, state_.socs, a); // validates bounds

    // tracker updates happen strictly after the reward computation
    for (std::size_t i = 0; i < trackers_.size(); ++i) {
        auto completed = trackers_[i].push(state_.socs[i], state_.t + 1,
                                           config_.fleet.units[i].capacity, static_cast<int>(i));
        out.completed_cycles.insert(out.completed_cycles.end(), completed.begin(),
                                    completed.end());
    }

    if (const auto* markov = std::get_if<signal::MarkovSignalModel>(&config_.source)) {
        state_.regulation = signal::markov_next(*markov, state_.regulation, signal_rng_);
    } else {
        const auto& samples = std::get<TraceReplay>(config_.source).trace.samples;
        ++trace_pos_;
        if (trace_pos_ + 1 >= samples.size()) {
            done_ = true;
            out.episode_end = true;
        }
        if (trace_pos_ < samples.size()) state_.regulation = samples[trace_pos_];
    }

    ++state_.t;
    out.next_state = state_;
    return out;
}

} // namespace fleetrl::env
