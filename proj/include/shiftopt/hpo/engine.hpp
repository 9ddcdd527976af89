#pragma once

// The multi-fidelity (multi-objective) optimization loop: HyperBand brackets
// over shift-depth fidelities, first rounds filled by the surrogate-guided
// suggester, promotion by ParEGO scalar (MFMO) or validation loss (MF), an
// exact evaluation budget, and deterministic replay-based resume.

#include <cstdint>
#include <functional>
#include <vector>

#include "shiftopt/data.hpp"
#include "shiftopt/energy.hpp"
#include "shiftopt/hpo/config_space.hpp"
#include "shiftopt/hpo/pareto.hpp"
#include "shiftopt/hpo/run_history.hpp"

namespace shiftopt {

struct EngineOptions {
    int min_fidelity = 1;
    int max_fidelity = 1;
    int eta = 2;
    std::uint64_t seed = 0;
    int workers = 1;  // parallel evaluations per round; results recorded in submission order
    EnergyModel energy_model;
    std::vector<LayerSpec> arch;
    TensorShape input_shape;
    bool include_test_energy = false;
    int n_candidates = 500;

    // Resume support: records replayed positionally instead of retrained; the
    // engine verifies each replayed record matches what it would have run.
    std::vector<RunRecord> preloaded;
    // Invoked once per completed record, in index order.
    std::function<void(const RunRecord&)> on_record;
};

struct MfmoResult {
    RunHistory history;
    ParetoArchive archive;
};

struct MfResult {
    RunHistory history;
    RunRecord incumbent;  // lowest validation loss at the highest evaluated fidelity
};

// Consumes exactly `budget` evaluations; deterministic per options.seed.
MfmoResult run_mfmo(const ConfigSpace& space, const DatasetSplits& splits,
                    const EngineOptions& options, int budget);

MfResult run_mf_single(const ConfigSpace& space, const DatasetSplits& splits,
                       const EngineOptions& options, int budget);

}  // namespace shiftopt
