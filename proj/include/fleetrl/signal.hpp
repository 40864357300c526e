#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fleetrl/common.hpp"

namespace fleetrl::signal {

// Finite set of regulation values, in energy units per slot.
struct RegulationAlphabet {
    std::vector<int> values; // strictly increasing

    static RegulationAlphabet from_values(std::vector<int> vals); // sorts, dedupes, validates
    std::size_t size() const { return values.size(); }
    // position of v in values, or throws validation_error
    std::size_t index_of(int v) const;
    bool contains(int v) const;
    int max_abs() const;
    // true when the alphabet spans both signs; callers warn, never reject
    bool has_both_signs() const;
};

// First-order Markov chain over a regulation alphabet.
struct MarkovSignalModel {
    RegulationAlphabet alphabet;
    std::vector<double> transition; // row-major, side = |alphabet|

    static MarkovSignalModel uniform(RegulationAlphabet alphabet);
    static MarkovSignalModel from_rows(RegulationAlphabet alphabet, std::vector<double> rows);

    double at(std::size_t row, std::size_t col) const {
        return transition[row * alphabet.size() + col];
    }
    void validate() const; // row sums within 1e-9 of 1, entries in [0,1]
};

// Discretized regulation trace (integer energy units per slot).
struct TraceSignal {
    std::vector<int> samples;
    int regulation_capacity = 0;
    double resolution = 0.0;
    int sample_period_seconds = 0; // metadata only
    long clamp_warnings = 0;       // raw values outside [-1,1] clamped on ingest
};

// Draw the successor of `current` from its transition row.
int markov_next(const MarkovSignalModel& model, int current, Rng& rng);

// Snap a normalized trace in [-1,1] onto the integer regulation grid.
// Ties (exact half steps) round away from zero; out-of-range values are
// clamped and counted.
TraceSignal ingest_trace(const std::vector<double>& raw, int regulation_capacity,
                         double resolution, int sample_period_seconds = 0);

RegulationAlphabet alphabet_of(const TraceSignal& trace);

// Empirical transition frequencies; rows with no observed visits become
// uniform so the fitted chain stays simulable from every state.
MarkovSignalModel fit_transition_matrix(const TraceSignal& trace);
MarkovSignalModel fit_transition_matrix(const TraceSignal& trace,
                                        const RegulationAlphabet& alphabet);

// Plain-text model file: first line alphabet values, then one matrix row per line.
void save_model(const MarkovSignalModel& model, std::ostream& out);
MarkovSignalModel load_model(std::istream& in);
void save_model_file(const MarkovSignalModel& model, const std::string& path);
MarkovSignalModel load_model_file(const std::string& path);

// CSV with header `timestamp,regd_normalized`; returns the normalized column.
std::vector<double> read_trace_csv(const std::string& path);

} // namespace fleetrl::signal
