#pragma once

// Deterministic energy/emissions proxy: converts operation counts and a
// per-sample overhead into joules, then into grams CO2-equivalent through a
// configurable grid carbon intensity. Stands in for hardware telemetry so
// every number is reproducible. The default per-op constants are
// order-of-magnitude figures for 45nm arithmetic; results are only ever
// compared relative to each other.

#include <cstdint>

#include "shiftopt/network.hpp"

namespace shiftopt {

struct EnergyModel {
    double joules_per_multiply = 3.7e-12;
    double joules_per_add = 0.9e-12;
    double joules_per_shift = 0.13e-12;
    double joules_per_sign_flip = 0.05e-12;
    double overhead_joules_per_sample = 1e-6;
    double carbon_intensity_g_per_kwh = 400.0;

    void validate() const;
};

struct EnergyReport {
    double total_joules = 0.0;
    double emissions_g = 0.0;  // = total_joules / 3.6e6 * carbon_intensity, exactly
    OpCounts op_totals;
    double wall_seconds = 0.0;
};

// Linear in every count: sum(count_k * joules_per_k) + samples * overhead.
EnergyReport estimate_energy(const OpCounts& ops, std::uint64_t samples_processed,
                             const EnergyModel& model);

// Total order by emissions, ties broken by total joules: -1, 0, +1.
int compare_report(const EnergyReport& a, const EnergyReport& b);

}  // namespace shiftopt
