#include "fleetrl/fleet.hpp"

#include <algorithm>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fleetrl::fleet {

FleetConfig FleetConfig::make(std::vector<BatteryUnit> units) {
    if (units.empty()) throw validation_error("fleet needs at least one battery");
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& u = units[i];
        if (u.capacity < 1 || u.max_charge < 1 || u.max_discharge < 1)
            throw validation_error("battery " + std::to_string(i) +
                                   ": capacity and ramp limits must be >= 1");
    }
    FleetConfig f;
    f.units = std::move(units);
    return f;
}

void validate_socs(const FleetConfig& fleet, const SocVector& socs) {
    if (socs.size() != fleet.size())
        throw validation_error("soc vector length does not match fleet size");
    for (std::size_t i = 0; i < socs.size(); ++i)
        if (socs[i] < 0 || socs[i] > fleet.units[i].capacity)
            throw validation_error("soc[" + std::to_string(i) + "] out of [0, B_i]");
}

std::pair<int, int> per_battery_bounds(const BatteryUnit& unit, int soc) {
    if (soc < 0 || soc > unit.capacity)
        throw validation_error("soc out of [0, capacity]");
    return {-std::min(unit.max_discharge, soc), std::min(unit.max_charge, unit.capacity - soc)};
}

std::pair<int, int> aggregate_limits(const FleetConfig& fleet, const SocVector& socs) {
    validate_socs(fleet, socs);
    int a_min = 0, a_max = 0;
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        auto [lo, hi] = per_battery_bounds(fleet.units[i], socs[i]);
        a_min += lo;
        a_max += hi;
    }
    return {a_min, a_max};
}

int served_regulation(int r, int a_min, int a_max) {
    if (a_min > a_max) throw validation_error("A_min > A_max");
    return std::min(std::max(r, a_min), a_max);
}

namespace {

struct Bounds {
    std::vector<int> lo, hi;
    std::vector<int> suffix_lo, suffix_hi; // sums over units i..N-1

    Bounds(const FleetConfig& fleet, const SocVector& socs) {
        const std::size_t n = fleet.size();
        lo.resize(n);
        hi.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            std::tie(lo[i], hi[i]) = per_battery_bounds(fleet.units[i], socs[i]);
        suffix_lo.assign(n + 1, 0);
        suffix_hi.assign(n + 1, 0);
        for (std::size_t i = n; i-- > 0;) {
            suffix_lo[i] = suffix_lo[i + 1] + lo[i];
            suffix_hi[i] = suffix_hi[i + 1] + hi[i];
        }
    }
};

void enumerate_rec(const Bounds& b, std::size_t i, int remaining, ActionVector& partial,
                   std::vector<ActionVector>& out) {
    const std::size_t n = b.lo.size();
    if (i == n - 1) {
        partial[i] = remaining; // pruned range guarantees feasibility
        out.push_back(partial);
        return;
    }
    const int from = std::max(b.lo[i], remaining - b.suffix_hi[i + 1]);
    const int to = std::min(b.hi[i], remaining - b.suffix_lo[i + 1]);
    for (int a = from; a <= to; ++a) {
        partial[i] = a;
        enumerate_rec(b, i + 1, remaining - a, partial, out);
    }
}

std::int64_t count_rec(const Bounds& b, std::size_t i, int remaining) {
    const std::size_t n = b.lo.size();
    if (i == n - 1) return 1; // pruning already guaranteed a feasible completion
    const int from = std::max(b.lo[i], remaining - b.suffix_hi[i + 1]);
    const int to = std::min(b.hi[i], remaining - b.suffix_lo[i + 1]);
    std::int64_t total = 0;
    for (int a = from; a <= to; ++a) total += count_rec(b, i + 1, remaining - a);
    return total;
}

} // namespace

std::vector<ActionVector> enumerate_actions(const FleetConfig& fleet, const SocVector& socs,
                                            int served) {
    validate_socs(fleet, socs);
    Bounds b(fleet, socs);
    if (served < b.suffix_lo[0] || served > b.suffix_hi[0])
        throw infeasibility_error("served regulation outside [A_min, A_max]");
    std::vector<ActionVector> out;
    ActionVector partial(fleet.size(), 0);
    enumerate_rec(b, 0, served, partial, out);
    return out;
}

std::int64_t count_actions(const FleetConfig& fleet, const SocVector& socs, int served) {
    Bounds b(fleet, socs);
    if (served < b.suffix_lo[0] || served > b.suffix_hi[0]) return 0;
    return count_rec(b, 0, served);
}

SocVector apply_action(const FleetConfig& fleet, const SocVector& socs, const ActionVector& a) {
    validate_socs(fleet, socs);
    if (a.size() != fleet.size())
        throw validation_error("action vector length does not match fleet size");
    SocVector next(socs.size());
    for (std::size_t i = 0; i < socs.size(); ++i) {
        auto [lo, hi] = per_battery_bounds(fleet.units[i], socs[i]);
        if (a[i] < lo || a[i] > hi)
            throw infeasibility_error("action component " + std::to_string(i) +
                                      " violates per-battery bounds");
        next[i] = socs[i] + a[i];
    }
    return next;
}

std::int64_t count_state_action_pairs(const FleetConfig& fleet,
                                      const signal::RegulationAlphabet& alphabet) {
    (void)alphabet; // the tabulated figure counts SoC states x ramp boxes only
    std::int64_t total = 1;
    for (const auto& u : fleet.units) {
        total *= static_cast<std::int64_t>(u.capacity + 1);
        total *= static_cast<std::int64_t>(u.max_charge + u.max_discharge + 1);
        if (total < 0) throw validation_error("state-action count overflows int64");
    }
    return total;
}

namespace {

// Linearize the SoC product space so the scan parallelizes over a flat index.
SocVector decode_socs(const FleetConfig& fleet, std::int64_t index) {
    SocVector socs(fleet.size());
    for (std::size_t i = fleet.size(); i-- > 0;) {
        const int radix = fleet.units[i].capacity + 1;
        socs[i] = static_cast<int>(index % radix);
        index /= radix;
    }
    return socs;
}

std::int64_t feasible_pairs_for(const FleetConfig& fleet,
                                const signal::RegulationAlphabet& alphabet,
                                const SocVector& socs) {
    Bounds b(fleet, socs);
    std::int64_t total = 0;
    for (int r : alphabet.values) {
        const int served = served_regulation(r, b.suffix_lo[0], b.suffix_hi[0]);
        total += count_rec(b, 0, served);
    }
    return total;
}

} // namespace

std::int64_t count_feasible_pairs_serial(const FleetConfig& fleet,
                                         const signal::RegulationAlphabet& alphabet) {
    std::int64_t soc_states = 1;
    for (const auto& u : fleet.units) soc_states *= static_cast<std::int64_t>(u.capacity + 1);
    std::int64_t total = 0;
    for (std::int64_t s = 0; s < soc_states; ++s)
        total += feasible_pairs_for(fleet, alphabet, decode_socs(fleet, s));
    return total;
}

std::int64_t count_feasible_pairs(const FleetConfig& fleet,
                                  const signal::RegulationAlphabet& alphabet, bool parallel) {
    if (!parallel) return count_feasible_pairs_serial(fleet, alphabet);
    std::int64_t soc_states = 1;
    for (const auto& u : fleet.units) soc_states *= static_cast<std::int64_t>(u.capacity + 1);
    std::int64_t total = 0;
#ifdef _OPENMP
#pragma omp parallel for reduction(+ : total) schedule(static)
#endif
    for (std::int64_t s = 0; s < soc_states; ++s)
        total += feasible_pairs_for(fleet, alphabet, decode_socs(fleet, s));
    return total;
}

} // namespace fleetrl::fleet
