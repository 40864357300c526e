#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fleetrl/common.hpp"
#include "fleetrl/signal.hpp"

namespace fleetrl::fleet {

struct BatteryUnit {
    int capacity = 1;      // B_i, energy units
    int max_charge = 1;    // c_i, energy units per slot
    int max_discharge = 1; // d_i, energy units per slot
};

struct FleetConfig {
    std::vector<BatteryUnit> units; // order is significant: it indexes every vector

    static FleetConfig make(std::vector<BatteryUnit> units);
    std::size_t size() const { return units.size(); }
};

using SocVector = std::vector<int>;    // soc[i] in [0, B_i]
using ActionVector = std::vector<int>; // positive = charge, negative = discharge

void validate_socs(const FleetConfig& fleet, const SocVector& socs);

// Feasible action interval for one unit at the given soc: lo <= 0 <= hi.
std::pair<int, int> per_battery_bounds(const BatteryUnit& unit, int soc);

// Fleet-wide feasible range (A_min, A_max) for the aggregate action.
std::pair<int, int> aggregate_limits(const FleetConfig& fleet, const SocVector& socs);

// Regulation request clipped into the feasible aggregate range.
int served_regulation(int r, int a_min, int a_max);

// All integer action vectors within per-battery bounds summing to `served`,
// in lexicographic order. Depth-first with suffix-sum pruning, so no dead
// branches are visited.
std::vector<ActionVector> enumerate_actions(const FleetConfig& fleet, const SocVector& socs,
                                            int served);

// Number of vectors enumerate_actions would return, without materializing them.
std::int64_t count_actions(const FleetConfig& fleet, const SocVector& socs, int served);

SocVector apply_action(const FleetConfig& fleet, const SocVector& socs, const ActionVector& a);

// Nominal state-action table size: |SoC product space| x |per-battery ramp
// boxes|. This is the scalability figure a tabular learner faces and the
// quantity reported alongside experiment tables.
std::int64_t count_state_action_pairs(const FleetConfig& fleet,
                                      const signal::RegulationAlphabet& alphabet);

// Feasibility diagnostic: sum over every (SoC configuration, regulation value)
// of the number of actions serving the clipped request. Exponential in N;
// intended for small fleets only.
std::int64_t count_feasible_pairs(const FleetConfig& fleet,
                                  const signal::RegulationAlphabet& alphabet,
                                  bool parallel = true);
std::int64_t count_feasible_pairs_serial(const FleetConfig& fleet,
                                         const signal::RegulationAlphabet& alphabet);

} // namespace fleetrl::fleet
