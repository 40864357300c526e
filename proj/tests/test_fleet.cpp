#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "fleetrl/fleet.hpp"

using namespace fleetrl;
using namespace fleetrl::fleet;

namespace {

FleetConfig toy_fleet() {
    return FleetConfig::make({{2, 2, 2}, {3, 3, 3}});
}

signal::RegulationAlphabet toy_alphabet() {
    return signal::RegulationAlphabet::from_values({-4, -1, 1, 5});
}

// independent oracle: walk the whole integer box and keep vectors summing to
// `served`; the production enumerator prunes instead
std::vector<ActionVector> brute_force_actions(const FleetConfig& fleet, const SocVector& socs,
                                              int served) {
    std::vector<std::pair<int, int>> bounds;
    for (std::size_t i = 0; i < fleet.size(); ++i)
        bounds.push_back(per_battery_bounds(fleet.units[i], socs[i]));
    std::vector<ActionVector> out;
    ActionVector a(fleet.size());
    const auto rec = [&](auto&& self, std::size_t i) -> void {
        if (i == fleet.size()) {
            int sum = 0;
            for (int v : a) sum += v;
            if (sum == served) out.push_back(a);
            return;
        }
        for (int v = bounds[i].first; v <= bounds[i].second; ++v) {
            a[i] = v;
            self(self, i + 1);
        }
    };
    rec(rec, 0);
    return out;
}

} // namespace

TEST_CASE("per_battery_bounds follows ramp and energy limits") {
    BatteryUnit u{3, 2, 2};
    CHECK(per_battery_bounds(u, 0) == std::pair<int, int>{0, 2});
    CHECK(per_battery_bounds(u, 3) == std::pair<int, int>{-2, 0});
    CHECK(per_battery_bounds(u, 1) == std::pair<int, int>{-1, 2});
    CHECK_THROWS_AS(per_battery_bounds(u, 4), validation_error);
    CHECK_THROWS_AS(per_battery_bounds(u, -1), validation_error);
}

TEST_CASE("aggregate_limits sums the per-battery bounds") {
    auto f = toy_fleet();
    CHECK(aggregate_limits(f, {0, 0}) == std::pair<int, int>{0, 5});
    CHECK(aggregate_limits(f, {2, 3}) == std::pair<int, int>{-5, 0});
    CHECK(aggregate_limits(f, {1, 2}) == std::pair<int, int>{-3, 2});
}

TEST_CASE("served_regulation clips into the feasible range") {
    CHECK(served_regulation(5, -3, 4) == 4);
    CHECK(served_regulation(-4, -3, 4) == -3);
    CHECK(served_regulation(1, -3, 4) == 1);
    CHECK_THROWS_AS(served_regulation(0, 2, 1), validation_error);
}

TEST_CASE("served_regulation is monotone and the identity inside the range") {
    for (int r = -10; r < 10; ++r)
        CHECK(served_regulation(r, -3, 4) <= served_regulation(r + 1, -3, 4));
    for (int r = -3; r <= 4; ++r) CHECK(served_regulation(r, -3, 4) == r);
}

TEST_CASE("enumerate_actions lists the N=2 example in lexicographic order") {
    // socs (1,2) here give bounds a1 in [-1,2], a2 in [-2,1]
    auto f = FleetConfig::make({{3, 2, 2}, {3, 3, 3}});
    auto actions = enumerate_actions(f, {1, 2}, 0);
    std::vector<ActionVector> expected = {{-1, 1}, {0, 0}, {1, -1}, {2, -2}};
    CHECK(actions == expected);
}

TEST_CASE("extreme served values force the corner vectors") {
    auto f = toy_fleet();
    auto [a_min, a_max] = aggregate_limits(f, {1, 2});
    auto at_max = enumerate_actions(f, {1, 2}, a_max);
    REQUIRE(at_max.size() == 1);
    CHECK(at_max[0] == ActionVector{1, 1});
    auto at_min = enumerate_actions(f, {1, 2}, a_min);
    REQUIRE(at_min.size() == 1);
    CHECK(at_min[0] == ActionVector{-1, -2});
    CHECK_THROWS_AS(enumerate_actions(f, {1, 2}, a_max + 1), infeasibility_error);
}

TEST_CASE("enumerator matches the brute-force oracle on random instances") {
    Rng rng(2024);
    for (int round = 0; round < 300; ++round) {
        const std::size_t n = 1 + rng.uniform_index(3);
        std::vector<BatteryUnit> units;
        SocVector socs;
        for (std::size_t i = 0; i < n; ++i) {
            const int cap = rng.uniform_int(1, 6);
            units.push_back({cap, rng.uniform_int(1, 4), rng.uniform_int(1, 4)});
            socs.push_back(rng.uniform_int(0, cap));
        }
        auto f = FleetConfig::make(units);
        auto [a_min, a_max] = aggregate_limits(f, socs);
        const int served = rng.uniform_int(a_min, a_max);
        auto fast = enumerate_actions(f, socs, served);
        auto slow = brute_force_actions(f, socs, served);
        CHECK(fast == slow); // both sorted: brute force walks the box in lex order
        CHECK(!fast.empty());
        CHECK(count_actions(f, socs, served) == static_cast<std::int64_t>(fast.size()));
        CHECK(std::adjacent_find(fast.begin(), fast.end()) == fast.end());
        for (const auto& a : fast) {
            int sum = 0;
            for (std::size_t i = 0; i < n; ++i) {
                auto [lo, hi] = per_battery_bounds(f.units[i], socs[i]);
                CHECK(a[i] >= lo);
                CHECK(a[i] <= hi);
                sum += a[i];
            }
            CHECK(sum == served);
        }
    }
}

TEST_CASE("N=2 closed form matches the general enumerator") {
    Rng rng(5150);
    for (int round = 0; round < 200; ++round) {
        const int cap1 = rng.uniform_int(1, 8), cap2 = rng.uniform_int(1, 8);
        auto f = FleetConfig::make(
            {{cap1, rng.uniform_int(1, 5), rng.uniform_int(1, 5)},
             {cap2, rng.uniform_int(1, 5), rng.uniform_int(1, 5)}});
        SocVector socs{rng.uniform_int(0, cap1), rng.uniform_int(0, cap2)};
        auto [lo1, hi1] = per_battery_bounds(f.units[0], socs[0]);
        auto [lo2, hi2] = per_battery_bounds(f.units[1], socs[1]);
        const int served = rng.uniform_int(lo1 + lo2, hi1 + hi2);
        const auto closed_form = std::max(
            0, std::min(hi1, served - lo2) - std::max(lo1, served - hi2) + 1);
        CHECK(static_cast<std::int64_t>(closed_form) == count_actions(f, socs, served));
    }
}

TEST_CASE("apply_action moves the SoC and validates bounds") {
    auto f = toy_fleet();
    CHECK(apply_action(f, {1, 2}, {1, -1}) == SocVector{2, 1});
    CHECK(apply_action(f, {0, 0}, {0, 0}) == SocVector{0, 0});
    CHECK_THROWS_AS(apply_action(f, {2, 3}, {1, 0}), infeasibility_error);
    CHECK_THROWS_AS(apply_action(f, {0, 0}, {-1, 1}), infeasibility_error);
}

TEST_CASE("actions from the enumerator always survive apply_action") {
    Rng rng(8);
    auto f = toy_fleet();
    for (int round = 0; round < 100; ++round) {
        SocVector socs{rng.uniform_int(0, 2), rng.uniform_int(0, 3)};
        auto [a_min, a_max] = aggregate_limits(f, socs);
        const int served = rng.uniform_int(a_min, a_max);
        for (const auto& a : enumerate_actions(f, socs, served)) {
            auto next = apply_action(f, socs, a);
            for (std::size_t i = 0; i < f.size(); ++i) {
                CHECK(next[i] >= 0);
                CHECK(next[i] <= f.units[i].capacity);
            }
        }
    }
}

TEST_CASE("state-action table sizes reproduce the published figures") {
    auto alphabet = toy_alphabet();
    CHECK(count_state_action_pairs(FleetConfig::make({{2, 2, 2}, {3, 3, 3}}), alphabet) == 420);
    CHECK(count_state_action_pairs(FleetConfig::make({{3, 2, 2}, {5, 3, 3}}), alphabet) == 840);
    CHECK(count_state_action_pairs(FleetConfig::make({{10, 2, 2}, {10, 3, 3}}), alphabet) == 4235);
    CHECK(count_state_action_pairs(FleetConfig::make({{15, 2, 2}, {10, 3, 3}}), alphabet) == 6160);
    CHECK(count_state_action_pairs(FleetConfig::make({{25, 2, 2}, {25, 3, 3}}), alphabet) == 23660);
}

TEST_CASE("PJM-scale table sizes") {
    std::vector<int> full;
    for (int v = -10; v <= 10; ++v) full.push_back(v);
    auto alphabet = signal::RegulationAlphabet::from_values(full);
    CHECK(count_state_action_pairs(FleetConfig::make({{5, 5, 5}, {10, 10, 10}}), alphabet) ==
          15246);
    CHECK(count_state_action_pairs(FleetConfig::make({{10, 5, 5}, {10, 10, 10}}), alphabet) ==
          27951);
    CHECK(count_state_action_pairs(FleetConfig::make({{100, 5, 5}, {100, 10, 10}}), alphabet) ==
          2356431);
}

TEST_CASE("feasible-pair scan: parallel equals serial") {
    auto f = FleetConfig::make({{4, 2, 2}, {5, 3, 3}, {3, 2, 1}});
    auto alphabet = toy_alphabet();
    const auto serial = count_feasible_pairs_serial(f, alphabet);
    const auto parallel = count_feasible_pairs(f, alphabet, true);
    CHECK(serial == parallel);
    CHECK(serial > 0);
}

TEST_CASE("feasible-pair scan agrees with direct enumeration on a small fleet") {
    auto f = toy_fleet();
    auto alphabet = toy_alphabet();
    std::int64_t expected = 0;
    for (int b1 = 0; b1 <= 2; ++b1)
        for (int b2 = 0; b2 <= 3; ++b2)
            for (int r : alphabet.values) {
                SocVector socs{b1, b2};
                auto [a_min, a_max] = aggregate_limits(f, socs);
                expected += static_cast<std::int64_t>(
                    enumerate_actions(f, socs, served_regulation(r, a_min, a_max)).size());
            }
    CHECK(count_feasible_pairs(f, alphabet) == expected);
    CHECK(expected == 77);
}
