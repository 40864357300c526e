// Command-line front end: train / evaluate / compare / rainflow / enumerate /
// fit-signal. Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fleetrl/agents.hpp"
#include "fleetrl/harness.hpp"

namespace {

using namespace fleetrl;

std::vector<int> split_ints(const std::string& csv) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stoi(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw validation_error("expected a comma-separated integer list");
    return out;
}

fleet::FleetConfig fleet_from_lists(const std::string& caps, const std::string& chg,
                                    const std::string& dis) {
    const auto b = split_ints(caps);
    const auto c = split_ints(chg);
    const auto d = split_ints(dis);
    if (c.size() != b.size() || d.size() != b.size())
        throw validation_error("fleet lists must have equal length");
    std::vector<fleet::BatteryUnit> units;
    for (std::size_t i = 0; i < b.size(); ++i) units.push_back({b[i], c[i], d[i]});
    return fleet::FleetConfig::make(std::move(units));
}

std::vector<int> read_soc_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw validation_error("cannot open trace file " + path);
    std::string line;
    if (!std::getline(f, line)) throw validation_error("empty trace file " + path);
    std::vector<int> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw validation_error("malformed soc trace row: " + line);
        out.push_back(std::stoi(line.substr(comma + 1)));
    }
    if (out.size() < 2) throw validation_error("soc trace needs at least 2 rows");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"battery fleet regulation dispatch simulator"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a learning agent, write a checkpoint");
    std::string train_config, train_out;
    train_cmd->add_option("--config", train_config, "experiment config file")->required();
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a policy, write a report CSV");
    std::string eval_config, eval_checkpoint, eval_report, eval_hist, eval_traj;
    eval_cmd->add_option("--config", eval_config, "experiment config file")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "ELM checkpoint to evaluate");
    eval_cmd->add_option("--report", eval_report, "report CSV path")->required();
    eval_cmd->add_option("--histogram", eval_hist, "per-battery DoD histogram CSV path");
    eval_cmd->add_option("--trajectory", eval_traj, "SoC trajectory CSV path");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "run several agents on one signal realization");
    std::string cmp_config, cmp_agents = "naive,greedy,elm", cmp_out, cmp_hist_dir;
    bool cmp_serial = false;
    cmp_cmd->add_option("--config", cmp_config, "experiment config file")->required();
    cmp_cmd->add_option("--agents", cmp_agents, "comma-separated agent list");
    cmp_cmd->add_option("--out", cmp_out, "comparison table CSV path")->required();
    cmp_cmd->add_option("--histogram-dir", cmp_hist_dir, "directory for per-agent histogram CSVs");
    cmp_cmd->add_flag("--serial", cmp_serial, "run agents sequentially");

    // rainflow
    auto* rf_cmd = app.add_subcommand("rainflow", "count cycles in a SoC trace CSV (t,soc)");
    std::string rf_trace, rf_ledger, rf_hist, rf_edges = "auto";
    int rf_capacity = 0;
    double rf_half_weight = 0.5;
    rf_cmd->add_option("--trace", rf_trace, "SoC trace CSV with columns t,soc")->required();
    rf_cmd->add_option("--capacity", rf_capacity, "battery capacity")->required();
    rf_cmd->add_option("--ledger", rf_ledger, "cycle ledger CSV path")->required();
    rf_cmd->add_option("--histogram", rf_hist, "histogram CSV path")->required();
    rf_cmd->add_option("--edges", rf_edges, "space-separated bin edges, or auto");
    rf_cmd->add_option("--half-weight", rf_half_weight, "residual half-cycle weight");

    // enumerate
    auto* enum_cmd = app.add_subcommand("enumerate", "state-action space figures for a fleet");
    std::string en_caps, en_chg, en_dis, en_alphabet;
    bool en_serial = false;
    enum_cmd->add_option("--capacity", en_caps, "comma-separated capacities")->required();
    enum_cmd->add_option("--max-charge", en_chg, "comma-separated charge limits")->required();
    enum_cmd->add_option("--max-discharge", en_dis, "comma-separated discharge limits")->required();
    enum_cmd->add_option("--alphabet", en_alphabet, "comma-separated regulation alphabet")->required();
    enum_cmd->add_flag("--serial", en_serial, "disable the parallel feasibility scan");

    // fit-signal
    auto* fit_cmd = app.add_subcommand("fit-signal", "fit a transition matrix from a trace CSV");
    std::string fit_trace, fit_out;
    int fit_capacity = 0;
    double fit_resolution = 0.1;
    fit_cmd->add_option("--trace", fit_trace, "trace CSV (timestamp,regd_normalized)")->required();
    fit_cmd->add_option("--capacity", fit_capacity, "regulation capacity")->required();
    fit_cmd->add_option("--resolution", fit_resolution, "normalized grid resolution");
    fit_cmd->add_option("--out", fit_out, "matrix file output path")->required();

    CLI11_PARSE(app, argc, argv);

    if (*train_cmd) {
        auto cfg = harness::parse_config_file(train_config);
        if (cfg.agent != harness::AgentKind::elm)
            throw validation_error("train writes ELM checkpoints; set [agent] type = elm");
        agents::ElmAgent agent(cfg.fleet, cfg.alphabet(), cfg.alpha_d, cfg.beta, cfg.elm);
        env::Environment environment(cfg.env_config(), cfg.seeds.signal);
        Rng explore(cfg.seeds.exploration);
        const auto log = agents::train(environment, agent, cfg.train_steps, explore);
        agent.save_checkpoint(train_out);
        std::printf("trained %lld steps, %lld weight updates%s\n",
                    static_cast<long long>(log.steps),
                    static_cast<long long>(agent.updates_applied()),
                    log.truncated ? " (trace truncated)" : "");
        return 0;
    }

    if (*eval_cmd) {
        auto cfg = harness::parse_config_file(eval_config);
        harness::RunReport report;
        const std::uint64_t eval_seed =
            cfg.reuse_signal_for_eval ? cfg.seeds.signal : cfg.seeds.eval_signal;
        if (!eval_checkpoint.empty()) {
            auto agent = agents::ElmAgent::load_checkpoint(eval_checkpoint, cfg.fleet,
                                                           cfg.alphabet(), cfg.alpha_d, cfg.beta);
            report = harness::evaluate_policy(cfg, agent, eval_seed);
        } else {
            report = harness::run_experiment(cfg);
        }
        harness::write_report_csv({report}, eval_report);
        if (!eval_hist.empty()) harness::emit_histogram_csv(report, eval_hist);
        if (!eval_traj.empty()) harness::write_trajectory_csv(report, eval_traj);
        std::printf("%s: reward %.6f over %lld steps\n", report.agent.c_str(),
                    report.accumulated_reward, static_cast<long long>(report.eval_steps));
        return 0;
    }

    if (*cmp_cmd) {
        auto cfg = harness::parse_config_file(cmp_config);
        std::vector<harness::AgentKind> kinds;
        std::size_t pos = 0;
        while (pos < cmp_agents.size()) {
            auto comma = cmp_agents.find(',', pos);
            if (comma == std::string::npos) comma = cmp_agents.size();
            kinds.push_back(harness::agent_kind_from_string(cmp_agents.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        const auto reports = harness::compare_policies(cfg, kinds, !cmp_serial);
        harness::write_report_csv(reports, cmp_out);
        if (!cmp_hist_dir.empty()) {
            for (const auto& r : reports)
                harness::emit_histogram_csv(r, cmp_hist_dir + "/hist_" + r.agent + ".csv");
        }
        for (const auto& r : reports)
            std::printf("%-8s reward %.6f\n", r.agent.c_str(), r.accumulated_reward);
        return 0;
    }

    if (*rf_cmd) {
        const auto trace = read_soc_trace_csv(rf_trace);
        const auto ledger = cycles::rainflow_offline(trace, rf_capacity, 0, rf_half_weight);
        harness::write_ledger_csv(ledger, rf_ledger);
        std::vector<double> edges = rf_edges == "auto" ? cycles::default_bin_edges()
                                                       : [&] {
                                                             std::istringstream in(rf_edges);
                                                             std::vector<double> e;
                                                             double v;
                                                             while (in >> v) e.push_back(v);
                                                             return e;
                                                         }();
        harness::write_histogram_csv(cycles::dod_histogram(ledger, edges), rf_hist);
        std::printf("%zu cycle records\n", ledger.records.size());
        return 0;
    }

    if (*enum_cmd) {
        const auto fleet_cfg = fleet_from_lists(en_caps, en_chg, en_dis);
        const auto alphabet = signal::RegulationAlphabet::from_values(split_ints(en_alphabet));
        const auto pairs = fleet::count_state_action_pairs(fleet_cfg, alphabet);
        const auto feasible = fleet::count_feasible_pairs(fleet_cfg, alphabet, !en_serial);
        std::printf("state_action_pairs=%lld\n", static_cast<long long>(pairs));
        std::printf("feasible_pairs=%lld\n", static_cast<long long>(feasible));
        return 0;
    }

    if (*fit_cmd) {
        const auto raw = signal::read_trace_csv(fit_trace);
        const auto trace = signal::ingest_trace(raw, fit_capacity, fit_resolution);
        const auto model = signal::fit_transition_matrix(trace);
        signal::save_model_file(model, fit_out);
        if (trace.clamp_warnings > 0)
            std::fprintf(stderr, "warning: clamped %ld out-of-range samples\n",
                         trace.clamp_warnings);
        std::printf("fitted %zu-state model from %zu samples\n", model.alphabet.size(),
                    trace.samples.size());
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const fleetrl::validation_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    }
}
