#include "shiftopt/hpo/pareto.hpp"

#include <algorithm>
#include <cmath>

namespace shiftopt {

bool ObjectiveVector::finite() const { return std::isfinite(loss) && std::isfinite(emissions); }

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    return a.loss <= b.loss && a.emissions <= b.emissions &&
           (a.loss < b.loss || a.emissions < b.emissions);
}

void update_archive(ParetoArchive& archive, const ParetoEntry& record) {
    if (!record.objectives.finite()) return;

    const std::string key = record.config.canonical_string();
    auto same_config = std::find_if(archive.entries.begin(), archive.entries.end(),
                                    [&](const ParetoEntry& e) {
                                        return e.config.canonical_string() == key;
                                    });
    if (same_config != archive.entries.end()) {
        if (same_config->fidelity > record.fidelity) return;  // keep the higher-fidelity view
        archive.entries.erase(same_config);
    }

    for (const ParetoEntry& e : archive.entries)
        if (dominates(e.objectives, record.objectives)) return;

    std::erase_if(archive.entries, [&](const ParetoEntry& e) {
        return dominates(record.objectives, e.objectives);
    });
    archive.entries.push_back(record);
}

}  // namespace shiftopt
