#include "fleetrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fleetrl::harness {

AgentKind agent_kind_from_string(const std::string& name) {
    if (name == "naive") return AgentKind::naive;
    if (name == "greedy") return AgentKind::greedy;
    if (name == "tabular") return AgentKind::tabular;
    if (name == "elm") return AgentKind::elm;
    throw validation_error("unknown agent kind: " + name);
}

std::string to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::naive: return "naive";
        case AgentKind::greedy: return "greedy";
        case AgentKind::tabular: return "tabular";
        case AgentKind::elm: return "elm";
    }
    return "naive";
}

signal::RegulationAlphabet ExperimentConfig::alphabet() const {
    if (markov_mode || trace_as_markov) {
        if (markov) return markov->alphabet;
        if (trace) return signal::alphabet_of(*trace);
        throw validation_error("no signal source configured");
    }
    return signal::alphabet_of(*trace);
}

env::EnvConfig ExperimentConfig::env_config() const {
    env::EnvConfig ec;
    ec.fleet = fleet;
    if (markov_mode) {
        if (!markov) throw validation_error("markov mode needs an alphabet or matrix file");
        ec.source = *markov;
    } else if (trace_as_markov) {
        if (!trace) throw validation_error("trace mode needs a trace file");
        ec.source = signal::fit_transition_matrix(*trace);
    } else {
        if (!trace) throw validation_error("trace mode needs a trace file");
        ec.source = env::TraceReplay{*trace};
    }
    ec.alpha_d = alpha_d;
    ec.beta = beta;
    ec.gamma = gamma;
    ec.initial_soc = initial_soc;
    return ec;
}

// ---------------------------------------------------------------------------
// config file parsing
// ---------------------------------------------------------------------------

namespace {

struct RawConfig {
    // section -> key -> value string
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::map<std::string, std::map<std::string, bool>> consumed;

    bool has(const std::string& sec, const std::string& key) {
        auto s = sections.find(sec);
        return s != sections.end() && s->second.count(key) > 0;
    }
    std::string take(const std::string& sec, const std::string& key) {
        if (!has(sec, key))
            throw validation_error("config is missing [" + sec + "] " + key);
        consumed[sec][key] = true;
        return sections.at(sec).at(key);
    }
    std::string take_or(const std::string& sec, const std::string& key, const std::string& dflt) {
        if (!has(sec, key)) return dflt;
        return take(sec, key);
    }
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

RawConfig tokenize_config(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw validation_error("config line " + std::to_string(lineno) +
                                       ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error("config line " + std::to_string(lineno) +
                                   ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (section.empty())
            throw validation_error("config line " + std::to_string(lineno) +
                                   ": key outside any section");
        raw.sections[section][key] = value;
    }
    return raw;
}

std::vector<int> parse_ints(const std::string& s) {
    std::istringstream in(s);
    std::vector<int> out;
    int v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw validation_error("expected integers, got: " + s);
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::istringstream in(s);
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw validation_error("expected numbers, got: " + s);
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw validation_error("expected a boolean, got: " + s);
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir) {
    RawConfig raw = tokenize_config(text);
    ExperimentConfig cfg;

    // [fleet]
    {
        const auto caps = parse_ints(raw.take("fleet", "capacity"));
        const auto chg = parse_ints(raw.take("fleet", "max_charge"));
        const auto dis = parse_ints(raw.take("fleet", "max_discharge"));
        if (chg.size() != caps.size() || dis.size() != caps.size())
            throw validation_error("fleet vectors must have equal length");
        std::vector<fleet::BatteryUnit> units;
        for (std::size_t i = 0; i < caps.size(); ++i)
            units.push_back({caps[i], chg[i], dis[i]});
        cfg.fleet = fleet::FleetConfig::make(std::move(units));
    }

    // [signal]
    {
        const auto mode = raw.take_or("signal", "mode", "markov");
        if (mode == "markov") {
            cfg.markov_mode = true;
            if (raw.has("signal", "matrix_file")) {
                cfg.markov = signal::load_model_file(
                    resolve_path(base_dir, raw.take("signal", "matrix_file")));
            } else if (raw.has("signal", "alphabet")) {
                cfg.markov = signal::MarkovSignalModel::uniform(
                    signal::RegulationAlphabet::from_values(
                        parse_ints(raw.take("signal", "alphabet"))));
            } else {
                throw validation_error("[signal] markov mode needs alphabet or matrix_file");
            }
        } else if (mode == "trace") {
            cfg.markov_mode = false;
            const auto path = resolve_path(base_dir, raw.take("signal", "trace_file"));
            const int capacity = parse_ints(raw.take("signal", "regulation_capacity")).at(0);
            const double resolution = parse_doubles(raw.take("signal", "resolution")).at(0);
            const int period =
                parse_ints(raw.take_or("signal", "sample_period_seconds", "10")).at(0);
            cfg.trace = signal::ingest_trace(signal::read_trace_csv(path), capacity, resolution,
                                             period);
            cfg.trace_as_markov = parse_bool(raw.take_or("signal", "trace_as_markov", "false"));
            if (cfg.trace_as_markov) {
                cfg.markov = signal::fit_transition_matrix(*cfg.trace);
                cfg.markov_mode = true;
            }
        } else {
            throw validation_error("unknown signal mode: " + mode);
        }
    }

    // [reward]
    cfg.alpha_d = parse_doubles(raw.take_or("reward", "alpha_d", "0.01")).at(0);
    cfg.beta = parse_doubles(raw.take_or("reward", "beta", "1.0")).at(0);

    // [run]
    cfg.horizon = static_cast<std::int64_t>(parse_doubles(raw.take_or("run", "horizon", "100000")).at(0));
    cfg.train_steps =
        static_cast<std::int64_t>(parse_doubles(raw.take_or("run", "train_steps", "100000")).at(0));
    cfg.gamma = parse_doubles(raw.take_or("run", "gamma", "0.95")).at(0);
    cfg.record_trajectory = parse_bool(raw.take_or("run", "record_trajectory", "false"));
    cfg.reuse_signal_for_eval = parse_bool(raw.take_or("run", "reuse_signal_for_eval", "false"));
    {
        const auto init = raw.take_or("run", "initial_soc", "half");
        if (init == "half") {
            cfg.initial_soc = env::HalfCapacityInitialSoc{};
        } else if (init == "uniform") {
            cfg.initial_soc = env::UniformInitialSoc{};
        } else if (init.rfind("fixed", 0) == 0) {
            cfg.initial_soc = env::FixedInitialSoc{parse_ints(init.substr(5))};
        } else {
            throw validation_error("unknown initial_soc policy: " + init);
        }
    }
    if (cfg.horizon < 1) throw validation_error("horizon must be >= 1");

    // [agent]
    cfg.agent = agent_kind_from_string(raw.take_or("agent", "type", "naive"));
    cfg.elm.d = parse_ints(raw.take_or("agent", "d", "50")).at(0);
    cfg.elm.activation =
        agents::activation_from_string(raw.take_or("agent", "activation", "silu"));
    cfg.elm.batch_size =
        static_cast<std::size_t>(parse_ints(raw.take_or("agent", "batch_size", "128")).at(0));
    cfg.elm.update_period = parse_ints(raw.take_or("agent", "update_period", "8")).at(0);
    cfg.elm.buffer_capacity = static_cast<std::size_t>(
        parse_doubles(raw.take_or("agent", "buffer_capacity", "2000")).at(0));
    cfg.elm.epsilon0 = parse_doubles(raw.take_or("agent", "epsilon0", "0.6")).at(0);
    cfg.elm.base_alpha = parse_doubles(raw.take_or("agent", "base_alpha", "1e-4")).at(0);
    cfg.elm.gamma = cfg.gamma;
    {
        const auto lr = raw.take_or("agent", "lr_mode", "visit");
        if (lr == "visit") cfg.elm.lr_mode = agents::LearningRateMode::visit_mean;
        else if (lr == "global") cfg.elm.lr_mode = agents::LearningRateMode::global_decay;
        else throw validation_error("unknown lr_mode: " + lr);
    }
    cfg.elm.lr_kappa = parse_doubles(raw.take_or("agent", "lr_kappa", "0.001")).at(0);
    {
        const auto rs = raw.take_or("agent", "reward_scale", "auto");
        cfg.elm.reward_scale_override = rs == "auto" ? 0.0 : parse_doubles(rs).at(0);
    }
    cfg.tabular.base_alpha = parse_doubles(raw.take_or("agent", "tabular_alpha", "1e-4")).at(0);
    cfg.tabular.epsilon0 = cfg.elm.epsilon0;
    cfg.tabular.gamma = cfg.gamma;
    cfg.tabular.pair_cap = static_cast<std::int64_t>(
        parse_doubles(raw.take_or("agent", "tabular_pair_cap", "1000000")).at(0));

    // [seeds] -- all required: no implicit seeding
    cfg.seeds.signal = static_cast<std::uint64_t>(parse_doubles(raw.take("seeds", "signal")).at(0));
    cfg.seeds.elm = static_cast<std::uint64_t>(parse_doubles(raw.take("seeds", "elm")).at(0));
    cfg.seeds.exploration =
        static_cast<std::uint64_t>(parse_doubles(raw.take("seeds", "exploration")).at(0));
    cfg.seeds.naive_remainder =
        static_cast<std::uint64_t>(parse_doubles(raw.take("seeds", "naive")).at(0));
    cfg.seeds.eval_signal =
        static_cast<std::uint64_t>(parse_doubles(raw.take("seeds", "eval_signal")).at(0));
    cfg.elm.feature_seed = cfg.seeds.elm;

    // [evaluation]
    {
        const auto kind = raw.take_or("evaluation", "stress", "rational");
        if (kind == "rational") {
            const double k1 = parse_doubles(raw.take_or("evaluation", "k1", "1.4e5")).at(0);
            const double k2 = parse_doubles(raw.take_or("evaluation", "k2", "-5.01e-1")).at(0);
            const double k3 = parse_doubles(raw.take_or("evaluation", "k3", "-1.23e5")).at(0);
            cfg.eval_stress = cycles::StressModel::rational(k1, k2, k3);
        } else if (kind == "exponential") {
            cfg.eval_stress = cycles::StressModel::exponential(cfg.alpha_d, cfg.beta);
        } else {
            throw validation_error("unknown evaluation stress model: " + kind);
        }
        const auto edges = raw.take_or("evaluation", "histogram_edges", "auto");
        cfg.histogram_edges =
            edges == "auto" ? cycles::default_bin_edges() : parse_doubles(edges);
    }

    // reject unknown keys so config typos fail loudly
    for (const auto& [sec, keys] : raw.sections)
        for (const auto& [key, value] : keys)
            if (!raw.consumed[sec][key])
                throw validation_error("unknown config key [" + sec + "] " + key);

    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw validation_error("cannot open config file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str(),
                             std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// experiment runs
// ---------------------------------------------------------------------------

namespace {

std::unique_ptr<agents::Policy> make_policy(const ExperimentConfig& cfg, AgentKind kind) {
    switch (kind) {
        case AgentKind::naive: return std::make_unique<agents::NaivePolicy>(cfg.fleet);
        case AgentKind::greedy:
            return std::make_unique<agents::GreedyPolicy>(cfg.alpha_d, cfg.beta);
        case AgentKind::tabular:
            return std::make_unique<agents::TabularQAgent>(cfg.fleet, cfg.alphabet(), cfg.alpha_d,
                                                           cfg.beta, cfg.tabular);
        case AgentKind::elm:
            return std::make_unique<agents::ElmAgent>(cfg.fleet, cfg.alphabet(), cfg.alpha_d,
                                                      cfg.beta, cfg.elm);
    }
    throw validation_error("unknown agent kind");
}

} // namespace

RunReport evaluate_policy(const ExperimentConfig& config, agents::Policy& policy,
                          std::uint64_t eval_seed) {
    const auto start = std::chrono::steady_clock::now();
    env::Environment environment(config.env_config(), eval_seed);
    policy.set_eval_mode(true);
    // the policy rng only drives the naive remainder during evaluation
    Rng rng(fnv1a(policy.name(), fnv1a_u64(config.seeds.naive_remainder)));

    RunReport report;
    report.agent = policy.name();
    const std::size_t n = config.fleet.size();
    report.trajectories.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) report.trajectories[i].push_back(environment.state().socs[i]);

    std::uint64_t checksum = 1469598103934665603ull;
    for (std::int64_t t = 0; t < config.horizon; ++t) {
        if (environment.done()) {
            report.truncated = true;
            break;
        }
        const auto& state = environment.state();
        checksum = fnv1a_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(state.regulation)),
                             checksum);
        auto [served, feasible] = environment.feasible();
        const auto sps = environment.switching_points();
        const std::size_t pick = policy.choose(state, served, feasible, sps, t, rng);
        const auto outcome = environment.step(feasible[pick]);
        report.accumulated_reward += outcome.reward;
        report.regulation_trace.push_back(state.regulation);
        report.served_trace.push_back(outcome.served);
        for (std::size_t i = 0; i < n; ++i)
            report.trajectories[i].push_back(outcome.next_state.socs[i]);
        ++report.eval_steps;
    }
    report.signal_checksum = checksum;
    report.clipping_events = environment.clipping_events();

    // true degradation from the complete trajectories
    for (std::size_t i = 0; i < n; ++i) {
        const auto ledger = cycles::rainflow_offline(report.trajectories[i],
                                                     config.fleet.units[i].capacity,
                                                     static_cast<int>(i));
        report.per_battery_degradation.push_back(
            cycles::total_degradation(ledger, config.eval_stress));
        double count = 0.0;
        for (const auto& rec : ledger.records) count += cycles::cycle_weight(ledger, rec);
        report.cycle_counts.push_back(count);
        report.dod_histograms.push_back(cycles::dod_histogram(ledger, config.histogram_edges));
    }
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

RunReport run_experiment(const ExperimentConfig& config) {
    auto policy = make_policy(config, config.agent);
    if (policy->is_learner()) {
        env::Environment train_env(config.env_config(), config.seeds.signal);
        Rng explore(config.seeds.exploration);
        agents::train(train_env, *policy, config.train_steps, explore);
    }
    const std::uint64_t eval_seed =
        config.reuse_signal_for_eval ? config.seeds.signal : config.seeds.eval_signal;
    return evaluate_policy(config, *policy, eval_seed);
}

std::vector<RunReport> compare_policies(const ExperimentConfig& config,
                                        const std::vector<AgentKind>& agent_kinds,
                                        bool parallel_runs) {
    if (agent_kinds.size() < 2)
        throw validation_error("compare needs at least two agents");
    std::vector<RunReport> reports(agent_kinds.size());
    const auto run_one = [&](std::size_t k) {
        ExperimentConfig local = config;
        local.agent = agent_kinds[k];
        // name-derived seeds keep each row independent of the agent list order
        const std::uint64_t tag = fnv1a(to_string(agent_kinds[k]));
        local.seeds.exploration = config.seeds.exploration ^ tag;
        local.seeds.naive_remainder = config.seeds.naive_remainder;
        reports[k] = run_experiment(local);
    };
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel_runs && agent_kinds.size() > 1)
#endif
    for (std::size_t k = 0; k < agent_kinds.size(); ++k) run_one(k);
    return reports;
}

// ---------------------------------------------------------------------------
// CSV output (fixed formats so identical runs produce identical bytes)
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
}

} // namespace

void write_report_csv(const std::vector<RunReport>& reports, const std::string& path) {
    auto f = open_out(path);
    const std::size_t n = reports.empty() ? 0 : reports[0].per_battery_degradation.size();
    f << "agent,reward";
    for (std::size_t i = 0; i < n; ++i) f << ",D_" << (i + 1);
    f << ",cycle_count,clipping_events,signal_checksum,truncated\n";
    for (const auto& r : reports) {
        f << r.agent << "," << fmt(r.accumulated_reward);
        for (double d : r.per_battery_degradation) f << "," << fmt(d);
        double cycles_total = 0.0;
        for (double c : r.cycle_counts) cycles_total += c;
        f << "," << fmt(cycles_total) << "," << r.clipping_events << "," << r.signal_checksum
          << "," << (r.truncated ? 1 : 0) << "\n";
    }
}

void emit_histogram_csv(const RunReport& report, const std::string& path) {
    auto f = open_out(path);
    f << "battery,bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < report.dod_histograms.size(); ++i) {
        const auto& h = report.dod_histograms[i];
        for (std::size_t j = 0; j + 1 < h.edges.size(); ++j)
            f << (i + 1) << "," << fmt(h.edges[j]) << "," << fmt(h.edges[j + 1]) << ","
              << fmt(h.counts[j]) << "\n";
        if (h.overflow > 0.0)
            f << (i + 1) << "," << fmt(h.edges.back()) << ",inf," << fmt(h.overflow) << "\n";
    }
}

void write_trajectory_csv(const RunReport& report, const std::string& path) {
    auto f = open_out(path);
    const std::size_t n = report.trajectories.size();
    f << "t";
    for (std::size_t i = 0; i < n; ++i) f << ",soc_" << (i + 1);
    f << ",r,served\n";
    for (std::size_t t = 0; t < report.regulation_trace.size(); ++t) {
        f << t;
        for (std::size_t i = 0; i < n; ++i) f << "," << report.trajectories[i][t];
        f << "," << report.regulation_trace[t] << "," << report.served_trace[t] << "\n";
    }
}

void write_ledger_csv(const cycles::CycleLedger& ledger, const std::string& path) {
    auto f = open_out(path);
    f << "completed_at,kind,depth\n";
    for (const auto& rec : ledger.records)
        f << rec.completed_at << ","
          << (rec.kind == cycles::CycleKind::full ? "full" : "half") << "," << fmt(rec.depth)
          << "\n";
}

void write_histogram_csv(const cycles::Histogram& hist, const std::string& path) {
    auto f = open_out(path);
    f << "bin_lo,bin_hi,count\n";
    for (std::size_t j = 0; j + 1 < hist.edges.size(); ++j)
        f << fmt(hist.edges[j]) << "," << fmt(hist.edges[j + 1]) << "," << fmt(hist.counts[j])
          << "\n";
    if (hist.overflow > 0.0) f << fmt(hist.edges.back()) << ",inf," << fmt(hist.overflow) << "\n";
}

} // namespace fleetrl::harness
