#include "fleetrl/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fleetrl::cycles {

TurningPointTracker::TurningPointTracker(int initial_soc)
    : points_{initial_soc}, last_(initial_soc), direction_(0) {}

std::vector<CycleRecord> TurningPointTracker::push(int new_soc, std::int64_t t, int capacity,
                                                   int battery) {
    if (new_soc < 0 || new_soc > capacity)
        throw validation_error("soc out of [0, capacity]");
    std::vector<CycleRecord> completed;
    if (new_soc == last_) return completed; // flat moves never create extrema

    const int direction = new_soc > last_ ? 1 : -1;
    if (direction_ != 0 && direction != direction_)
        points_.push_back(last_); // reversal confirms the previous SoC as an extremum
    direction_ = direction;
    last_ = new_soc;

    while (points_.size() >= 3) {
        const int p1 = points_[points_.size() - 2];
        const int p2 = points_[points_.size() - 1];
        if (std::abs(new_soc - p2) < std::abs(p2 - p1)) break;
        completed.push_back({static_cast<double>(std::abs(p2 - p1)) / capacity,
                             CycleKind::full, t, battery});
        points_.pop_back();
        points_.pop_back();
    }
    return completed;
}

std::vector<int> TurningPointTracker::residual_profile() const {
    std::vector<int> seq = points_;
    if (last_ != seq.back()) seq.push_back(last_);
    return seq;
}

StressModel StressModel::exponential(double alpha_d, double beta) {
    if (alpha_d <= 0.0 || beta <= 0.0)
        throw validation_error("exponential stress needs alpha_d, beta > 0");
    if (!std::isfinite(alpha_d * std::exp(beta)))
        throw validation_error("exponential stress diverges at depth 1");
    StressModel m;
    m.kind = Kind::exponential;
    m.alpha_d = alpha_d;
    m.beta = beta;
    return m;
}

StressModel StressModel::rational(double k1, double k2, double k3) {
    StressModel m;
    m.kind = Kind::rational;
    m.k1 = k1;
    m.k2 = k2;
    m.k3 = k3;
    // the denominator must stay positive over the whole depth range
    for (int i = 1; i <= 1000; ++i) {
        const double depth = static_cast<double>(i) / 1000.0;
        if (k1 * std::pow(depth, k2) + k3 <= 0.0)
            throw validation_error("rational stress denominator non-positive at depth " +
                                   std::to_string(depth));
    }
    return m;
}

double stress(const StressModel& model, double depth) {
    if (depth <= 0.0 || depth > 1.0)
        throw validation_error("cycle depth must lie in (0, 1]");
    if (model.kind == StressModel::Kind::exponential)
        return model.alpha_d * std::exp(model.beta * depth);
    const double denom = model.k1 * std::pow(depth, model.k2) + model.k3;
    if (denom <= 0.0) throw validation_error("rational stress denominator non-positive");
    return 1.0 / denom;
}

namespace {

struct TurningPoint {
    int value;
    std::int64_t t;
};

// Collapse a trace to its alternating extrema, keeping first and last points.
std::vector<TurningPoint> compress(const std::vector<int>& trace) {
    std::vector<TurningPoint> tp;
    tp.push_back({trace[0], 0});
    for (std::size_t k = 1; k < trace.size(); ++k) {
        const int v = trace[k];
        if (v == tp.back().value) continue;
        if (tp.size() >= 2) {
            const long prev = tp.back().value - tp[tp.size() - 2].value;
            const long cur = v - tp.back().value;
            if ((prev > 0) == (cur > 0)) { // same direction: extend the run
                tp.back() = {v, static_cast<std::int64_t>(k)};
                continue;
            }
        }
        tp.push_back({v, static_cast<std::int64_t>(k)});
    }
    return tp;
}

} // namespace

CycleLedger rainflow_offline(const std::vector<int>& trace, int capacity, int battery,
                             double residual_half_weight) {
    if (trace.size() < 2) throw validation_error("rainflow needs a trace of length >= 2");
    if (capacity < 1) throw validation_error("capacity must be >= 1");
    for (int v : trace)
        if (v < 0 || v > capacity) throw validation_error("trace value out of [0, capacity]");

    CycleLedger ledger;
    ledger.residual_half_weight = residual_half_weight;

    std::vector<TurningPoint> stack;
    for (const auto& point : compress(trace)) {
        stack.push_back(point);
        // four points on the stack leave the bottom out of the candidate
        // triple, so residual pairs anchored at the trace start survive
        while (stack.size() >= 4) {
            const auto& p2 = stack[stack.size() - 3];
            const auto& p3 = stack[stack.size() - 2];
            const auto& p4 = stack[stack.size() - 1];
            if (std::abs(p4.value - p3.value) < std::abs(p3.value - p2.value)) break;
            ledger.records.push_back({static_cast<double>(std::abs(p3.value - p2.value)) / capacity,
                                      CycleKind::full, p4.t, battery});
            stack.erase(stack.end() - 3, stack.end() - 1);
        }
    }
    for (std::size_t i = 0; i + 1 < stack.size(); ++i) {
        ledger.records.push_back({static_cast<double>(std::abs(stack[i + 1].value - stack[i].value)) / capacity,
                                  CycleKind::half, stack[i + 1].t, battery});
    }
    return ledger;
}

double cycle_weight(const CycleLedger& ledger, const CycleRecord& rec) {
    return rec.kind == CycleKind::full ? 1.0 : ledger.residual_half_weight;
}

double total_degradation(const CycleLedger& ledger, const StressModel& model) {
    double total = 0.0;
    for (const auto& rec : ledger.records)
        total += cycle_weight(ledger, rec) * stress(model, rec.depth);
    return total;
}

std::vector<double> default_bin_edges() {
    std::vector<double> edges(11);
    for (int i = 0; i <= 10; ++i) edges[i] = static_cast<double>(i) / 10.0;
    return edges;
}

Histogram dod_histogram(const CycleLedger& ledger, const std::vector<double>& bin_edges) {
    if (bin_edges.size() < 2) throw validation_error("need at least two bin edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (bin_edges[i] <= bin_edges[i - 1])
            throw validation_error("bin edges must be strictly increasing");
    if (bin_edges.front() > 0.0 || bin_edges.back() < 1.0)
        throw validation_error("bin edges must cover (0, 1]");

    Histogram h;
    h.edges = bin_edges;
    h.counts.assign(bin_edges.size() - 1, 0.0);
    for (const auto& rec : ledger.records) {
        const double w = cycle_weight(ledger, rec);
        // bins are left-open right-closed: depth lands in (e_j, e_{j+1}]
        auto it = std::lower_bound(h.edges.begin(), h.edges.end(), rec.depth);
        if (it == h.edges.end()) {
            h.overflow += w;
            continue;
        }
        const std::size_t j = static_cast<std::size_t>(it - h.edges.begin());
        if (j == 0) {
            h.overflow += w; // depth <= first edge; cannot happen for valid depths
            continue;
        }
        h.counts[j - 1] += w;
    }
    return h;
}

double Histogram::mass() const {
    double m = overflow;
    for (double c : counts) m += c;
    return m;
}

} // namespace fleetrl::cycles
