#pragma once

// ParEGO scalarization: per-iteration random weights on the 2-simplex and the
// augmented Tchebycheff scalar max(w1*f1, w2*f2) + rho*(w1*f1 + w2*f2) over
// min-max normalized objectives.

#include <array>
#include <cstdint>

#include "shiftopt/hpo/run_history.hpp"

namespace shiftopt {

struct ScalarizationWeights {
    double w1 = 0.5;
    double w2 = 0.5;
    double rho = 0.05;
};

// Affine maps taking each objective's observed finite [min, max] onto [0, 1].
// Divergence sentinels are excluded from range fitting and map to 2.0, which
// any observed value dominates. A zero observed range maps everything to 0.
struct ObjectiveNormalizer {
    bool degenerate = false;  // fewer than 2 finite observations in some objective
    double loss_lo = 0.0, loss_hi = 0.0;
    double em_lo = 0.0, em_hi = 0.0;

    static ObjectiveNormalizer fit(const RunHistory& history);
    std::array<double, 2> apply(const ObjectiveVector& obj) const;
};

double parego_scalarize(const std::array<double, 2>& normalized,
                        const ScalarizationWeights& weights);

// One weight vector per HyperBand iteration: w1 uniform on the 11-point grid
// {0, 0.1, ..., 1.0}, w2 = 1 - w1, rho = 0.05. Deterministic per (seed,
// iteration).
ScalarizationWeights draw_weights(std::uint64_t seed, int iteration);

}  // namespace shiftopt
