#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fleetrl/env.hpp"

using namespace fleetrl;
using namespace fleetrl::env;

namespace {

EnvConfig toy_config(std::vector<fleet::BatteryUnit> units = {{2, 2, 2}, {3, 3, 3}}) {
    EnvConfig cfg;
    cfg.fleet = fleet::FleetConfig::make(std::move(units));
    cfg.source = signal::MarkovSignalModel::uniform(
        signal::RegulationAlphabet::from_values({-4, -1, 1, 5}));
    cfg.alpha_d = 0.01;
    cfg.beta = 1.0;
    cfg.gamma = 0.9;
    return cfg;
}

} // namespace

TEST_CASE("reset applies the initial SoC policy") {
    SUBCASE("half capacity") {
        auto cfg = toy_config({{10, 2, 2}, {10, 3, 3}});
        Environment e(cfg, 1);
        CHECK(e.state().socs == fleet::SocVector{5, 5});
    }
    SUBCASE("fixed vector") {
        auto cfg = toy_config();
        cfg.initial_soc = FixedInitialSoc{{0, 0}};
        Environment e(cfg, 1);
        CHECK(e.state().socs == fleet::SocVector{0, 0});
    }
    SUBCASE("fixed vector violating capacity is rejected") {
        auto cfg = toy_config();
        cfg.initial_soc = FixedInitialSoc{{5, 0}};
        CHECK_THROWS_AS(Environment(cfg, 1), validation_error);
    }
    SUBCASE("same seed twice reproduces the state") {
        auto cfg = toy_config();
        cfg.initial_soc = UniformInitialSoc{};
        Environment a(cfg, 42), b(cfg, 42);
        CHECK(a.state().socs == b.state().socs);
        CHECK(a.state().regulation == b.state().regulation);
    }
}

TEST_CASE("proxy reward evaluates the per-battery exponential difference") {
    SUBCASE("zero action gives zero reward") {
        auto [total, per] = proxy_reward({1, 2}, {0, 3}, {0, 0}, 0.01, 1.0);
        CHECK(total == 0.0);
        CHECK(per == std::vector<double>{0.0, -0.0});
    }
    SUBCASE("moving away from the switching point costs") {
        auto [total, per] = proxy_reward({1}, {1}, {1}, 0.01, 1.0);
        CHECK(total == doctest::Approx(-0.01 * (std::exp(1.0) - 1.0)));
        CHECK(total == doctest::Approx(-0.01718).epsilon(1e-3));
    }
    SUBCASE("returning toward the switching point pays back") {
        auto [total, per] = proxy_reward({3}, {1}, {-2}, 0.01, 1.0);
        CHECK(total == doctest::Approx(0.01 * (std::exp(2.0) - 1.0)));
        CHECK(total == doctest::Approx(0.06389).epsilon(1e-3));
    }
    SUBCASE("total is the sum of the per-battery terms") {
        auto [total, per] = proxy_reward({1, 2}, {0, 3}, {1, -1}, 0.02, 0.7);
        CHECK(total == doctest::Approx(per[0] + per[1]));
    }
}

TEST_CASE("feasible set respects clipping") {
    auto cfg = toy_config();
    SUBCASE("full batteries cannot serve a charge request") {
        cfg.initial_soc = FixedInitialSoc{{2, 3}};
        Environment e(cfg, 3);
        // force a positive request by stepping until regulation is 5
        auto [served, actions] = e.feasible();
        if (e.state().regulation == 5) {
            CHECK(served == 0);
            for (const auto& a : actions) CHECK(a[0] + a[1] == 0);
        }
        // A_max = 0 regardless of the current request sign
        auto [a_min, a_max] = fleet::aggregate_limits(cfg.fleet, e.state().socs);
        CHECK(a_max == 0);
        CHECK(fleet::served_regulation(5, a_min, a_max) == 0);
    }
    SUBCASE("empty batteries cannot serve a discharge request") {
        cfg.initial_soc = FixedInitialSoc{{0, 0}};
        Environment e(cfg, 3);
        auto [a_min, a_max] = fleet::aggregate_limits(cfg.fleet, e.state().socs);
        CHECK(fleet::served_regulation(-4, a_min, a_max) == 0);
        auto actions = fleet::enumerate_actions(cfg.fleet, {0, 0}, 0);
        REQUIRE(actions.size() == 1);
        CHECK(actions[0] == fleet::ActionVector{0, 0});
    }
    SUBCASE("requests inside the range pass through") {
        Environment e(cfg, 3); // socs (1,1)
        auto [a_min, a_max] = fleet::aggregate_limits(cfg.fleet, e.state().socs);
        const int r = e.state().regulation;
        auto [served, actions] = e.feasible();
        CHECK(served == fleet::served_regulation(r, a_min, a_max));
        if (r >= a_min && r <= a_max) CHECK(served == r);
    }
}

TEST_CASE("step order: reward from pre-step switching points") {
    auto cfg = toy_config({{4, 2, 2}});
    cfg.initial_soc = FixedInitialSoc{{0}};
    cfg.source = signal::MarkovSignalModel::uniform(signal::RegulationAlphabet::from_values({2, -2}));
    Environment e(cfg, 5);

    // 0 -> 2: deviation from sp=0 grows to 2
    auto out1 = e.step({2});
    CHECK(out1.reward == doctest::Approx(-0.01 * (std::exp(2.0) - 1.0)));
    CHECK(e.state().socs[0] == 2);
    CHECK(e.switching_points()[0] == 0); // still rising, no reversal yet

    // 2 -> 0: the return leg is measured against the pre-step sp=0
    auto out2 = e.step({-2});
    CHECK(out2.reward == doctest::Approx(+0.01 * (std::exp(2.0) - 1.0)));
    CHECK(e.state().socs[0] == 0);
    CHECK(e.switching_points()[0] == 2); // reversal confirmed after the reward
}

TEST_CASE("zero action leaves the state and pays nothing") {
    auto cfg = toy_config();
    cfg.source =
        signal::MarkovSignalModel::uniform(signal::RegulationAlphabet::from_values({0}));
    Environment e(cfg, 6);
    auto socs_before = e.state().socs;
    auto out = e.step({0, 0});
    CHECK(out.reward == 0.0);
    CHECK(e.state().socs == socs_before);
    CHECK(e.state().t == 1);
}

TEST_CASE("infeasible actions are rejected") {
    auto cfg = toy_config();
    cfg.initial_soc = FixedInitialSoc{{0, 0}};
    Environment e(cfg, 6);
    CHECK_THROWS_AS(e.step({-1, 1}), infeasibility_error);  // discharge from empty
    CHECK_THROWS_AS(e.step({1, 1}), infeasibility_error);   // does not sum to served
}

TEST_CASE("trace replay ends the episode at the final sample") {
    EnvConfig cfg;
    cfg.fleet = fleet::FleetConfig::make({{4, 2, 2}});
    signal::TraceSignal trace;
    trace.samples = {1, 1, -1, 2};
    trace.regulation_capacity = 4;
    trace.resolution = 0.25;
    cfg.source = TraceReplay{trace};
    cfg.initial_soc = FixedInitialSoc{{2}};
    Environment e(cfg, 9);

    CHECK(e.state().regulation == 1);
    auto o1 = e.step({1});
    CHECK_FALSE(o1.episode_end);
    CHECK(e.state().regulation == 1);
    auto o2 = e.step({1});
    CHECK_FALSE(o2.episode_end);
    CHECK(e.state().regulation == -1);
    auto o3 = e.step({-1});
    CHECK(o3.episode_end); // the final sample is now the state; no successor
    CHECK(e.done());
    CHECK_THROWS_AS(e.step({0}), validation_error);
}

TEST_CASE("step outcomes report completed cycles") {
    auto cfg = toy_config({{4, 4, 4}});
    cfg.initial_soc = FixedInitialSoc{{0}};
    signal::TraceSignal trace;
    trace.samples = {4, -3, 2, -3, 0, 0}; // drives the SoC walk 0,4,1,3,0
    trace.regulation_capacity = 4;
    trace.resolution = 0.25;
    cfg.source = TraceReplay{trace};
    Environment e(cfg, 11);
    e.step({4});  // 0 -> 4
    e.step({-3}); // 4 -> 1
    e.step({2});  // 1 -> 3
    auto out = e.step({-3}); // 3 -> 0 extracts the nested 1<->3 cycle
    REQUIRE(out.completed_cycles.size() == 1);
    CHECK(out.completed_cycles[0].depth == doctest::Approx(0.5));
    CHECK(out.completed_cycles[0].battery == 0);
}

TEST_CASE("telescoping over monotone runs") {
    // over a monotone run the switching point is pinned at the run start, so
    // the per-step rewards collapse to the endpoint difference
    Rng rng(21);
    for (int round = 0; round < 100; ++round) {
        const int capacity = 20;
        const int start = rng.uniform_int(0, capacity);
        const double beta = rng.uniform(0.1, 1.0);
        const bool up = start == 0 ? true : (start == capacity ? false : rng.uniform01() < 0.5);

        int soc = start;
        const int sp = start;
        std::vector<int> sps{sp};
        double total = 0.0;
        for (int k = 0; k < 30; ++k) {
            const int room = up ? capacity - soc : soc;
            if (room == 0) break;
            const int a = (up ? 1 : -1) * rng.uniform_int(1, std::min(room, 4));
            total += proxy_reward({soc}, sps, {a}, 0.01, beta).first;
            soc += a;
        }
        const double dev_end = std::abs(soc - sp);
        const double closed_form = -0.01 * (std::exp(beta * dev_end) - std::exp(beta * 0.0));
        CHECK(total == doctest::Approx(closed_form).epsilon(1e-10));
    }
}

TEST_CASE("identical seeds and actions give identical outcome sequences") {
    auto cfg = toy_config();
    Environment a(cfg, 404), b(cfg, 404);
    Rng pick(7);
    for (int t = 0; t < 300; ++t) {
        auto [served_a, actions_a] = a.feasible();
        auto [served_b, actions_b] = b.feasible();
        REQUIRE(served_a == served_b);
        REQUIRE(actions_a == actions_b);
        const std::size_t k = pick.uniform_index(actions_a.size());
        auto out_a = a.step(actions_a[k]);
        auto out_b = b.step(actions_b[k]);
        CHECK(out_a.reward == out_b.reward);
        CHECK(out_a.served == out_b.served);
        CHECK(out_a.next_state.socs == out_b.next_state.socs);
        CHECK(out_a.next_state.regulation == out_b.next_state.regulation);
    }
}

TEST_CASE("rewards sum per battery and served matches the action sum") {
    auto cfg = toy_config();
    Environment e(cfg, 17);
    Rng pick(3);
    for (int t = 0; t < 500; ++t) {
        auto [served, actions] = e.feasible();
        auto out = e.step(actions[pick.uniform_index(actions.size())]);
        double sum = 0.0;
        for (double r : out.per_battery_rewards) sum += r;
        CHECK(out.reward == doctest::Approx(sum).epsilon(1e-12));
        CHECK(out.served == served);
        for (std::size_t i = 0; i < cfg.fleet.size(); ++i) {
            CHECK(out.next_state.socs[i] >= 0);
            CHECK(out.next_state.socs[i] <= cfg.fleet.units[i].capacity);
        }
    }
}

TEST_CASE("config validation") {
    auto cfg = toy_config();
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(Environment(cfg, 1), validation_error);
    cfg = toy_config();
    cfg.alpha_d = 0.0;
    CHECK_THROWS_AS(Environment(cfg, 1), validation_error);
}
