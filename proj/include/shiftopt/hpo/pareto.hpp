#pragma once

// Bi-objective Pareto machinery: (validation loss, training emissions), both
// minimized. The archive keeps the mutually non-dominated set over the
// highest-fidelity finite evaluation of each configuration.

#include <cstddef>
#include <string>
#include <vector>

#include "shiftopt/hpo/config_space.hpp"

namespace shiftopt {

struct ObjectiveVector {
    double loss = 0.0;       // +inf allowed, only as divergence sentinel
    double emissions = 0.0;  // gCO2eq

    bool finite() const;
};

// Strict Pareto dominance: a <= b in both objectives and < in at least one.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

struct ParetoEntry {
    HyperparameterConfig config;
    ObjectiveVector objectives;
    int fidelity = 0;
    std::size_t history_index = 0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

struct ParetoArchive {
    std::vector<ParetoEntry> entries;
};

// Inserts `record` unless an archived entry dominates it; drops entries it
// dominates. A config already archived is represented only by its
// highest-fidelity evaluation: a same-or-higher fidelity record replaces the
// old entry before the dominance test. Records with non-finite objectives are
// rejected outright (divergence sentinels never enter the archive).
void update_archive(ParetoArchive& archive, const ParetoEntry& record);

}  // namespace shiftopt
