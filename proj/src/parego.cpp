#include "shiftopt/hpo/parego.hpp"

#include <algorithm>
#include <cmath>

#include "shiftopt/rng.hpp"

namespace shiftopt {

ObjectiveNormalizer ObjectiveNormalizer::fit(const RunHistory& history) {
    ObjectiveNormalizer n;
    int loss_count = 0, em_count = 0;
    bool first_loss = true, first_em = true;
    for (const RunRecord& r : history.records) {
        if (std::isfinite(r.objectives.loss)) {
            if (first_loss) {
                n.loss_lo = n.loss_hi = r.objectives.loss;
                first_loss = false;
            } else {
                n.loss_lo = std::min(n.loss_lo, r.objectives.loss);
                n.loss_hi = std::max(n.loss_hi, r.objectives.loss);
            }
            ++loss_count;
        }
        if (std::isfinite(r.objectives.emissions)) {
            if (first_em) {
                n.em_lo = n.em_hi = r.objectives.emissions;
                first_em = false;
            } else {
                n.em_lo = std::min(n.em_lo, r.objectives.emissions);
                n.em_hi = std::max(n.em_hi, r.objectives.emissions);
            }
            ++em_count;
        }
    }
    n.degenerate = loss_count < 2 || em_count < 2;
    return n;
}

namespace {

double map_one(double v, double lo, double hi, bool degenerate) {
    if (std::isinf(v)) return 2.0;  // sentinel: dominated by construction
    if (degenerate) return v;       // identity fallback, flagged to the caller
    if (hi == lo) return 0.0;       // zero-range rule
    return (v - lo) / (hi - lo);
}

}  // namespace

std::array<double, 2> ObjectiveNormalizer::apply(const ObjectiveVector& obj) const {
    return {map_one(obj.loss, loss_lo, loss_hi, degenerate),
            map_one(obj.emissions, em_lo, em_hi, degenerate)};
}

double parego_scalarize(const std::array<double, 2>& normalized,
                        const ScalarizationWeights& weights) {
    const double a = weights.w1 * normalized[0];
    const double b = weights.w2 * normalized[1];
    return std::max(a, b) + weights.rho * (a + b);
}

ScalarizationWeights draw_weights(std::uint64_t seed, int iteration) {
    Rng rng(mix_seed(seed, 0x77656967ULL, static_cast<std::uint64_t>(iteration)));
    constexpr int kGridPoints = 10;  // w1 in {0, 1/10, ..., 1}
    const auto k = uniform_int(rng, 0, kGridPoints);
    ScalarizationWeights w;
    w.w1 = static_cast<double>(k) / kGridPoints;
    w.w2 = 1.0 - w.w1;
    w.rho = 0.05;
    return w;
}

}  // namespace shiftopt
