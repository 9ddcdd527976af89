#pragma once

// HyperBand bracket construction over the shift-depth fidelity and the
// successive-halving promotion rule. Bracket s starts
// ceil((s_max+1)/(s+1) * eta^s) configurations at fidelity max_f * eta^-s;
// each round keeps the best floor(n/eta) and multiplies the fidelity by eta,
// so the brackets trade cohort size against starting budget.

#include <cstddef>
#include <vector>

namespace shiftopt {

struct HyperBandRound {
    int num_configs = 0;
    int fidelity = 0;
};

struct HyperBandBracket {
    std::vector<HyperBandRound> rounds;
};

struct HyperBandSchedule {
    int eta = 2;
    int min_fidelity = 1;
    int max_fidelity = 1;
    std::vector<HyperBandBracket> brackets;  // widest/cheapest bracket first
};

// Fidelities are rounded to the nearest integer >= min_f; the final round of
// every bracket runs at max_f. min_f == max_f degenerates to a single
// bracket with a single full-fidelity round.
HyperBandSchedule build_schedule(int min_fidelity, int max_fidelity, int eta);

// Indices (in submission order) of the floor(n/eta) entries with the smallest
// scalar values; ties keep the earlier entry.
std::vector<std::size_t> promote(const std::vector<double>& scalars, int eta);

}  // namespace shiftopt
