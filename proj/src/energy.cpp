#include "shiftopt/energy.hpp"

#include <stdexcept>

namespace shiftopt {

void EnergyModel::validate() const {
    if (joules_per_multiply < 0 || joules_per_add < 0 || joules_per_shift < 0 ||
        joules_per_sign_flip < 0 || overhead_joules_per_sample < 0 ||
        carbon_intensity_g_per_kwh < 0)
        throw std::invalid_argument("EnergyModel: all cost constants must be nonnegative");
    if (joules_per_shift > joules_per_multiply)
        throw std::invalid_argument("EnergyModel: a shift must not cost more than a multiply");
}

EnergyReport estimate_energy(const OpCounts& ops, std::uint64_t samples_processed,
                             const EnergyModel& model) {
    model.validate();
    EnergyReport r;
    r.op_totals = ops;
    r.total_joules = static_cast<double>(ops.multiplies) * model.joules_per_multiply +
                     static_cast<double>(ops.adds) * model.joules_per_add +
                     static_cast<double>(ops.shifts) * model.joules_per_shift +
                     static_cast<double>(ops.sign_flips) * model.joules_per_sign_flip +
                     static_cast<double>(samples_processed) * model.overhead_joules_per_sample;
    r.emissions_g = r.total_joules / 3.6e6 * model.carbon_intensity_g_per_kwh;
    return r;
}

int compare_report(const EnergyReport& a, const EnergyReport& b) {
    if (a.emissions_g < b.emissions_g) return -1;
    if (a.emissions_g > b.emissions_g) return 1;
    if (a.total_joules < b.total_joules) return -1;
    if (a.total_joules > b.total_joules) return 1;
    return 0;
}

}  // namespace shiftopt
