#pragma once

// Random-forest surrogate over the encoded (config, fidelity) feature vector
// with expected-improvement acquisition. 32 trees, bootstrap resamples,
// random split dimension with midpoint threshold, leaves of at least 3
// samples; the across-tree spread serves as the predictive variance.

#include <cstdint>
#include <vector>

#include "shiftopt/hpo/parego.hpp"
#include "shiftopt/hpo/run_history.hpp"
#include "shiftopt/rng.hpp"

namespace shiftopt {

std::vector<double> encode_config(const HyperparameterConfig& cfg, int fidelity);

struct RegressionTree {
    struct Node {
        int feature = -1;       // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict(const std::vector<double>& x) const;
};

struct SurrogateModel {
    std::vector<RegressionTree> trees;
    double incumbent = 0.0;  // smallest training target

    bool valid() const { return !trees.empty(); }
    // Mean and across-tree variance at a query point.
    void predict(const std::vector<double>& x, double& mean, double& variance) const;
};

// Forest fit on raw features/targets. Fewer than 2 rows returns an invalid
// model (callers fall back to random sampling).
SurrogateModel fit_forest(const std::vector<std::vector<double>>& features,
                          const std::vector<double>& targets, Rng& rng, int n_trees = 32,
                          int min_leaf = 3);

// Targets are the current-weights ParEGO scalars of min-max normalized
// objectives; divergence sentinels map to an always-dominated 2.0 before
// scalarization. Needs >= 2 records with finite objectives.
SurrogateModel fit_surrogate(const RunHistory& history, const ScalarizationWeights& weights,
                             Rng& rng);

// Single-objective variant: targets are normalized validation losses.
SurrogateModel fit_surrogate_loss(const RunHistory& history, Rng& rng);

// Expected improvement under a normal approximation; zero variance degrades
// to max(incumbent - mean, 0).
double expected_improvement(double mean, double variance, double incumbent);

// Draws n_candidates random configs, scores EI with the surrogate, returns
// the best. Every 5th suggestion (and any call without a usable surrogate) is
// purely random. Never re-suggests a config already evaluated at
// target_fidelity, unless the space is exhausted.
HyperparameterConfig suggest(const ConfigSpace& space, const SurrogateModel& surrogate,
                             const RunHistory& history, Rng& rng, int target_fidelity,
                             std::size_t suggestion_index, int n_candidates = 500);

}  // namespace shiftopt
