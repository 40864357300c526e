#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fleetrl/harness.hpp"

using namespace fleetrl;
using namespace fleetrl::harness;

namespace {

const char* kToyConfig = R"(
# toy experiment
[fleet]
capacity      = 2 3
max_charge    = 2 3
max_discharge = 2 3

[signal]
mode = markov
alphabet = -4 -1 1 5

[reward]
alpha_d = 0.01
beta = 1.0

[run]
horizon = 400
train_steps = 600
gamma = 0.9
initial_soc = half

[agent]
type = elm
d = 20
batch_size = 16
buffer_capacity = 200
update_period = 8

[seeds]
signal = 11
elm = 22
exploration = 33
naive = 44
eval_signal = 55
)";

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("config parsing fills every section") {
    auto cfg = parse_config_text(kToyConfig);
    CHECK(cfg.fleet.size() == 2);
    CHECK(cfg.fleet.units[1].capacity == 3);
    CHECK(cfg.markov_mode);
    CHECK(cfg.markov->alphabet.values == std::vector<int>{-4, -1, 1, 5});
    CHECK(cfg.markov->at(0, 0) == doctest::Approx(0.25)); // uniform default
    CHECK(cfg.alpha_d == 0.01);
    CHECK(cfg.horizon == 400);
    CHECK(cfg.agent == AgentKind::elm);
    CHECK(cfg.elm.d == 20);
    CHECK(cfg.elm.batch_size == 16);
    CHECK(cfg.seeds.eval_signal == 55);
    CHECK(cfg.histogram_edges.size() == 11);
    CHECK(cfg.eval_stress.kind == cycles::StressModel::Kind::rational);
}

TEST_CASE("config parsing rejects mistakes") {
    SUBCASE("unknown keys") {
        std::string bad = std::string(kToyConfig) + "\n[run]\nhorizn = 5\n";
        CHECK_THROWS_AS(parse_config_text(bad), validation_error);
    }
    SUBCASE("missing seeds") {
        std::string text(kToyConfig);
        const auto pos = text.find("eval_signal = 55");
        text.erase(pos, 16);
        CHECK_THROWS_AS(parse_config_text(text), validation_error);
    }
    SUBCASE("malformed lines") {
        CHECK_THROWS_AS(parse_config_text("[fleet\ncapacity = 1\n"), validation_error);
        CHECK_THROWS_AS(parse_config_text("capacity = 1\n"), validation_error);
    }
}

TEST_CASE("run_experiment is reproducible end to end") {
    auto cfg = parse_config_text(kToyConfig);
    auto a = run_experiment(cfg);
    auto b = run_experiment(cfg);
    CHECK(a.accumulated_reward == b.accumulated_reward);
    CHECK(a.per_battery_degradation == b.per_battery_degradation);
    CHECK(a.signal_checksum == b.signal_checksum);
    CHECK(a.trajectories == b.trajectories);
}

TEST_CASE("accumulated reward equals the sum of step rewards") {
    auto cfg = parse_config_text(kToyConfig);
    cfg.agent = AgentKind::greedy;
    agents::GreedyPolicy policy(cfg.alpha_d, cfg.beta);

    // replicate the evaluation loop by hand and compare totals
    auto report = evaluate_policy(cfg, policy, cfg.seeds.eval_signal);
    env::Environment environment(cfg.env_config(), cfg.seeds.eval_signal);
    Rng rng(fnv1a("greedy", fnv1a_u64(cfg.seeds.naive_remainder)));
    double total = 0.0;
    for (int t = 0; t < cfg.horizon; ++t) {
        auto [served, feasible] = environment.feasible();
        const auto sps = environment.switching_points();
        const auto pick = policy.choose(environment.state(), served, feasible, sps, t, rng);
        total += environment.step(feasible[pick]).reward;
    }
    CHECK(report.accumulated_reward == doctest::Approx(total).epsilon(1e-9));
    CHECK(report.eval_steps == cfg.horizon);
}

TEST_CASE("degradation recomputed from the emitted trajectory matches the report") {
    auto cfg = parse_config_text(kToyConfig);
    cfg.agent = AgentKind::naive;
    auto report = run_experiment(cfg);
    REQUIRE(report.trajectories.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        auto ledger = cycles::rainflow_offline(report.trajectories[i],
                                               cfg.fleet.units[i].capacity, static_cast<int>(i));
        CHECK(cycles::total_degradation(ledger, cfg.eval_stress) ==
              report.per_battery_degradation[i]);
        double weighted = 0.0;
        for (const auto& rec : ledger.records) weighted += cycles::cycle_weight(ledger, rec);
        CHECK(report.cycle_counts[i] == weighted);
        CHECK(report.dod_histograms[i].mass() == doctest::Approx(weighted));
    }
}

TEST_CASE("compare runs every agent on the same signal realization") {
    auto cfg = parse_config_text(kToyConfig);
    auto reports = compare_policies(cfg, {AgentKind::naive, AgentKind::greedy, AgentKind::elm});
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].agent == "naive");
    CHECK(reports[1].agent == "greedy");
    CHECK(reports[2].agent == "elm");
    CHECK(reports[0].signal_checksum == reports[1].signal_checksum);
    CHECK(reports[1].signal_checksum == reports[2].signal_checksum);
}

TEST_CASE("compare rows do not depend on the agent order or parallelism") {
    auto cfg = parse_config_text(kToyConfig);
    auto forward = compare_policies(cfg, {AgentKind::naive, AgentKind::greedy}, true);
    auto backward = compare_policies(cfg, {AgentKind::greedy, AgentKind::naive}, false);
    CHECK(forward[0].accumulated_reward == backward[1].accumulated_reward);
    CHECK(forward[1].accumulated_reward == backward[0].accumulated_reward);
    CHECK(forward[0].per_battery_degradation == backward[1].per_battery_degradation);
    CHECK(forward[1].per_battery_degradation == backward[0].per_battery_degradation);
}

TEST_CASE("tabular agent slots into the harness") {
    auto cfg = parse_config_text(kToyConfig);
    cfg.agent = AgentKind::tabular;
    cfg.train_steps = 500;
    auto report = run_experiment(cfg);
    CHECK(report.eval_steps == cfg.horizon);
    CHECK(report.per_battery_degradation.size() == 2);
}

TEST_CASE("CSV emitters produce the documented columns") {
    auto cfg = parse_config_text(kToyConfig);
    auto reports = compare_policies(cfg, {AgentKind::naive, AgentKind::greedy});

    const auto dir = std::filesystem::temp_directory_path() / "fleetrl_harness_test";
    std::filesystem::create_directories(dir);

    const auto table = (dir / "table.csv").string();
    write_report_csv(reports, table);
    auto text = slurp(table);
    CHECK(text.rfind("agent,reward,D_1,D_2,cycle_count,clipping_events,signal_checksum,truncated",
                     0) == 0);
    CHECK(text.find("naive,") != std::string::npos);
    CHECK(text.find("greedy,") != std::string::npos);

    const auto hist = (dir / "hist.csv").string();
    emit_histogram_csv(reports[0], hist);
    auto hist_text = slurp(hist);
    CHECK(hist_text.rfind("battery,bin_lo,bin_hi,count", 0) == 0);
    // 2 batteries x 10 default bins + header
    CHECK(std::count(hist_text.begin(), hist_text.end(), '\n') >= 21);

    const auto traj = (dir / "traj.csv").string();
    write_trajectory_csv(reports[0], traj);
    auto traj_text = slurp(traj);
    CHECK(traj_text.rfind("t,soc_1,soc_2,r,served", 0) == 0);

    std::filesystem::remove_all(dir);
}

TEST_CASE("histogram files conserve the weighted cycle count") {
    auto cfg = parse_config_text(kToyConfig);
    cfg.agent = AgentKind::naive;
    auto report = run_experiment(cfg);
    double mass = 0.0, count = 0.0;
    for (const auto& h : report.dod_histograms) mass += h.mass();
    for (double c : report.cycle_counts) count += c;
    CHECK(mass == doctest::Approx(count).epsilon(1e-12));
}

TEST_CASE("trace mode configs replay or refit") {
    const auto dir = std::filesystem::temp_directory_path() / "fleetrl_trace_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "trace.csv");
        f << "timestamp,regd_normalized\n";
        Rng rng(5);
        for (int k = 0; k < 300; ++k) f << k << "," << rng.uniform(-1.0, 1.0) << "\n";
    }
    const auto make_text = [](const std::string& extra_signal_keys) {
        return "[fleet]\n"
               "capacity      = 4 4\n"
               "max_charge    = 2 2\n"
               "max_discharge = 2 2\n"
               "[signal]\n"
               "mode = trace\n"
               "trace_file = trace.csv\n"
               "regulation_capacity = 4\n"
               "resolution = 0.25\n" +
               extra_signal_keys +
               "[run]\n"
               "horizon = 600\n"
               "[agent]\n"
               "type = naive\n"
               "[seeds]\n"
               "signal = 1\nelm = 2\nexploration = 3\nnaive = 4\neval_signal = 5\n";
    };

    SUBCASE("replay mode truncates at trace exhaustion") {
        auto cfg = parse_config_text(make_text(""), dir.string());
        CHECK_FALSE(cfg.markov_mode);
        auto report = run_experiment(cfg);
        CHECK(report.truncated);         // 300 samples < 600 requested steps
        CHECK(report.eval_steps == 299); // one episode, K-1 transitions
    }
    SUBCASE("fitted-chain mode runs the full horizon") {
        auto cfg = parse_config_text(make_text("trace_as_markov = true\n"), dir.string());
        CHECK(cfg.markov_mode);
        CHECK(cfg.markov.has_value());
        auto report = run_experiment(cfg);
        CHECK_FALSE(report.truncated);
        CHECK(report.eval_steps == 600);
    }
    std::filesystem::remove_all(dir);
}
