#pragma once

#include <cstdint>
#include <vector>

#include "fleetrl/common.hpp"

namespace fleetrl::cycles {

enum class CycleKind { full, half };

struct CycleRecord {
    double depth = 0.0; // amplitude normalized by the owning battery's capacity, in (0,1]
    CycleKind kind = CycleKind::full;
    std::int64_t completed_at = 0;
    int battery = 0;
};

// Online turning-point stack for one battery's SoC trajectory.
//
// The stack holds the extrema of the still-open cycles; the back element is
// the current switching point. A direction reversal confirms the previous
// SoC as an extremum. After every push the stack is reduced with the
// three-point rule against the live SoC value: while the newest excursion
// covers the span of the two most recent extrema, that inner pair is emitted
// as a full cycle and removed, re-exposing the enclosing extremum (this is
// how the switching point moves backward in time). The pair containing the
// stack bottom is never extracted; it belongs to the residual.
class TurningPointTracker {
  public:
    explicit TurningPointTracker(int initial_soc);

    // Feed the next SoC value; returns the full cycles completed by this move.
    std::vector<CycleRecord> push(int new_soc, std::int64_t t, int capacity, int battery = 0);

    int switching_point() const { return points_.back(); }
    const std::vector<int>& points() const { return points_; }
    int last_soc() const { return last_; }

    // Turning points of the open (uncounted) part of the trajectory,
    // including the live endpoint. Adjacent pairs are the residual half cycles.
    std::vector<int> residual_profile() const;

  private:
    std::vector<int> points_;
    int last_;
    int direction_; // -1 falling, 0 flat, +1 rising
};

struct StressModel {
    enum class Kind { exponential, rational } kind = Kind::exponential;
    // exponential: alpha_d * exp(beta * depth)
    double alpha_d = 0.0, beta = 0.0;
    // rational: 1 / (k1 * depth^k2 + k3)
    double k1 = 0.0, k2 = 0.0, k3 = 0.0;

    static StressModel exponential(double alpha_d, double beta);
    static StressModel rational(double k1, double k2, double k3);
    // rational constants from the evaluation stress curve used in the tables
    static StressModel default_rational() { return rational(1.4e5, -5.01e-1, -1.23e5); }
};

double stress(const StressModel& model, double depth);

struct CycleLedger {
    std::vector<CycleRecord> records;
    double residual_half_weight = 0.5;
};

// Batch rainflow: compress the trace to turning points, extract full cycles
// with the three-point rule, and emit the leftover alternating sequence as
// adjacent-pair half cycles.
CycleLedger rainflow_offline(const std::vector<int>& trace, int capacity, int battery = 0,
                             double residual_half_weight = 0.5);

double cycle_weight(const CycleLedger& ledger, const CycleRecord& rec);

double total_degradation(const CycleLedger& ledger, const StressModel& model);

struct Histogram {
    std::vector<double> edges;  // strictly increasing, covering (0,1]
    std::vector<double> counts; // one per bin; full cycles weigh 1, halves the residual weight
    double overflow = 0.0;      // depths beyond the last edge

    double mass() const;
};

std::vector<double> default_bin_edges(); // 10 equal bins over (0,1]

Histogram dod_histogram(const CycleLedger& ledger, const std::vector<double>& bin_edges);

} // namespace fleetrl::cycles
