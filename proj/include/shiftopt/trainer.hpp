#pragma once

// Supervised training loop over shift-convertible networks: optimizer zoo
// from the search space, deterministic per-epoch shuffling, loss/accuracy
// evaluation and the per-run energy bundle consumed by the HPO engine.
// Diverging runs report a +inf validation-loss sentinel instead of throwing.

#include <cstdint>
#include <vector>

#include "shiftopt/data.hpp"
#include "shiftopt/energy.hpp"
#include "shiftopt/hpo/config_space.hpp"
#include "shiftopt/network.hpp"

namespace shiftopt {

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::SGD;
    double learning_rate = 0.1;
    double momentum = 0.0;   // honored by SGD and RMSProp
    double weight_decay = 0.0;
    long long step_count = 0;

    // Per-parameter accumulators, allocated on first step:
    // SGD: acc1 = velocity. Adam: acc1 = m, acc2 = v. Adagrad: acc1 = sum g^2.
    // Adadelta: acc1 = E[g^2], acc2 = E[dx^2]. RMSProp: acc1 = E[g^2],
    // acc2 = momentum buffer.
    std::vector<Matrix> acc1, acc2;
};

OptimizerState make_optimizer(const HyperparameterConfig& cfg);

// One canonical update step. Weight decay enters as g + decay * param.
// Adam uses beta = (0.9, 0.999), eps = 1e-8 with bias correction.
void step_optimizer(OptimizerState& state, const std::vector<Matrix*>& params,
                    const std::vector<const Matrix*>& grads);

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainOutcome {
    double val_loss = 0.0;       // +inf sentinel on divergence
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    EnergyReport energy;         // training + validation (optionally test)
    int epochs_run = 0;
    double wall_seconds = 0.0;
    bool diverged = false;
    std::vector<EpochStat> curve;  // filled when TrainOptions::record_curve
};

struct TrainOptions {
    EnergyModel energy_model;
    bool record_curve = false;        // per-epoch val accuracy (ops not billed)
    bool include_test_energy = false; // bill the test-set inference pass too
    std::size_t eval_batch = 256;
};

struct TrainResult {
    NetworkModel model;
    TrainOutcome outcome;
};

// Converts the model to `fidelity_depth` shift layers (clamped to the
// eligible layer count), then trains for config.epochs epochs. Deterministic
// given (seed, config, data); stochastic rounding draws come from a
// seed-derived stream.
TrainResult train(NetworkModel model, const DatasetSplits& splits,
                  const HyperparameterConfig& config, int fidelity_depth, std::uint64_t seed,
                  const TrainOptions& options);

struct EvalResult {
    double loss = 0.0;
    double top1_accuracy = 0.0;
    OpCounts ops;
    std::uint64_t samples = 0;
};

// Mean cross-entropy and top-1 accuracy on a frozen model; quantizers run in
// deterministic mode so repeated calls agree and no state mutates.
EvalResult evaluate(NetworkModel& model, const std::vector<Sample>& split,
                    std::size_t eval_batch = 256);

}  // namespace shiftopt
