#include "fleetrl/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fleetrl::signal {

RegulationAlphabet RegulationAlphabet::from_values(std::vector<int> vals) {
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    if (vals.empty()) throw validation_error("alphabet must be non-empty");
    RegulationAlphabet a;
    a.values = std::move(vals);
    return a;
}

std::size_t RegulationAlphabet::index_of(int v) const {
    auto it = std::lower_bound(values.begin(), values.end(), v);
    if (it == values.end() || *it != v)
        throw validation_error("value " + std::to_string(v) + " not in alphabet");
    return static_cast<std::size_t>(it - values.begin());
}

bool RegulationAlphabet::contains(int v) const {
    return std::binary_search(values.begin(), values.end(), v);
}

int RegulationAlphabet::max_abs() const {
    int m = 0;
    for (int v : values) m = std::max(m, std::abs(v));
    return m;
}

bool RegulationAlphabet::has_both_signs() const {
    return values.front() < 0 && values.back() > 0;
}

MarkovSignalModel MarkovSignalModel::uniform(RegulationAlphabet alphabet) {
    const std::size_t n = alphabet.size();
    MarkovSignalModel m;
    m.alphabet = std::move(alphabet);
    m.transition.assign(n * n, 1.0 / static_cast<double>(n));
    return m;
}

MarkovSignalModel MarkovSignalModel::from_rows(RegulationAlphabet alphabet,
                                               std::vector<double> rows) {
    MarkovSignalModel m;
    m.alphabet = std::move(alphabet);
    m.transition = std::move(rows);
    m.validate();
    return m;
}

void MarkovSignalModel::validate() const {
    const std::size_t n = alphabet.size();
    if (transition.size() != n * n)
        throw validation_error("transition matrix must be square with side |alphabet|");
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double p = at(i, j);
            if (p < 0.0 || p > 1.0)
                throw validation_error("transition entries must lie in [0,1]");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw validation_error("transition row " + std::to_string(i) +
                                   " sums to " + std::to_string(sum));
    }
}

int markov_next(const MarkovSignalModel& model, int current, Rng& rng) {
    const std::size_t row = model.alphabet.index_of(current);
    const std::size_t n = model.alphabet.size();
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += model.at(row, j);
        if (u < acc) return model.alphabet.values[j];
    }
    return model.alphabet.values[n - 1]; // u landed in the row's rounding slack
}

TraceSignal ingest_trace(const std::vector<double>& raw, int regulation_capacity,
                         double resolution, int sample_period_seconds) {
    if (raw.empty()) throw validation_error("trace must contain at least one sample");
    if (resolution <= 0.0) throw validation_error("resolution must be positive");
    if (regulation_capacity <= 0) throw validation_error("regulation capacity must be positive");

    const long long steps_per_unit = std::llround(1.0 / resolution);
    if (steps_per_unit < 1 || std::fabs(1.0 / resolution - static_cast<double>(steps_per_unit)) > 1e-9)
        throw validation_error("resolution must divide 1 exactly");
    const long long grid_step = std::llround(regulation_capacity * resolution);
    if (grid_step < 1 ||
        std::fabs(regulation_capacity * resolution - static_cast<double>(grid_step)) > 1e-9)
        throw validation_error("regulation_capacity * resolution must be an integer");

    TraceSignal t;
    t.regulation_capacity = regulation_capacity;
    t.resolution = resolution;
    t.sample_period_seconds = sample_period_seconds;
    t.samples.reserve(raw.size());
    for (double v : raw) {
        if (v > 1.0) { v = 1.0; ++t.clamp_warnings; }
        if (v < -1.0) { v = -1.0; ++t.clamp_warnings; }
        // llround rounds exact halves away from zero; multiplying by the
        // integer step count keeps half-step ties exact in binary
        const long long k = std::llround(v * static_cast<double>(steps_per_unit));
        t.samples.push_back(static_cast<int>(k * grid_step));
    }
    return t;
}

RegulationAlphabet alphabet_of(const TraceSignal& trace) {
    return RegulationAlphabet::from_values(trace.samples);
}

MarkovSignalModel fit_transition_matrix(const TraceSignal& trace) {
    return fit_transition_matrix(trace, alphabet_of(trace));
}

MarkovSignalModel fit_transition_matrix(const TraceSignal& trace,
                                        const RegulationAlphabet& alphabet) {
    if (trace.samples.size() < 2)
        throw validation_error("need at least 2 samples to fit transitions");
    const std::size_t n = alphabet.size();
    std::vector<std::int64_t> counts(n * n, 0);
    for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
        const std::size_t i = alphabet.index_of(trace.samples[k]);
        const std::size_t j = alphabet.index_of(trace.samples[k + 1]);
        ++counts[i * n + j];
    }
    std::vector<double> rows(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::int64_t total = 0;
        for (std::size_t j = 0; j < n; ++j) total += counts[i * n + j];
        if (total == 0) {
            for (std::size_t j = 0; j < n; ++j) rows[i * n + j] = 1.0 / static_cast<double>(n);
        } else {
            for (std::size_t j = 0; j < n; ++j)
                rows[i * n + j] = static_cast<double>(counts[i * n + j]) / static_cast<double>(total);
        }
    }
    return MarkovSignalModel::from_rows(alphabet, std::move(rows));
}

void save_model(const MarkovSignalModel& model, std::ostream& out) {
    const std::size_t n = model.alphabet.size();
    for (std::size_t j = 0; j < n; ++j)
        out << (j ? " " : "") << model.alphabet.values[j];
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", model.at(i, j));
            out << (j ? " " : "") << buf;
        }
        out << "\n";
    }
}

MarkovSignalModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty model file");
    std::istringstream head(line);
    std::vector<int> vals;
    int v;
    while (head >> v) vals.push_back(v);
    auto alphabet = RegulationAlphabet::from_values(std::move(vals));
    const std::size_t n = alphabet.size();
    std::vector<double> rows;
    rows.reserve(n * n);
    double p;
    while (in >> p) rows.push_back(p);
    if (rows.size() != n * n)
        throw validation_error("model file has wrong matrix size");
    return MarkovSignalModel::from_rows(std::move(alphabet), std::move(rows));
}

void save_model_file(const MarkovSignalModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    save_model(model, f);
}

MarkovSignalModel load_model_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw validation_error("cannot open model file " + path);
    return load_model(f);
}

std::vector<double> read_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw validation_error("cannot open trace file " + path);
    std::string line;
    if (!std::getline(f, line))
        throw validation_error("trace file is empty: " + path);
    // header: timestamp,regd_normalized
    std::vector<double> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw validation_error("malformed trace row: " + line);
        out.push_back(std::stod(line.substr(comma + 1)));
    }
    if (out.empty()) throw validation_error("trace file has no samples: " + path);
    return out;
}

} // namespace fleetrl::signal
