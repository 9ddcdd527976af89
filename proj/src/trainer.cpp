#include "shiftopt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace shiftopt {

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

OptimizerState make_optimizer(const HyperparameterConfig& cfg) {
    OptimizerState st;
    st.kind = cfg.optimizer;
    st.learning_rate = cfg.learning_rate;
    st.momentum = cfg.momentum;
    st.weight_decay = cfg.weight_decay;
    return st;
}

void step_optimizer(OptimizerState& state, const std::vector<Matrix*>& params,
                    const std::vector<const Matrix*>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("step_optimizer: parameter/gradient count mismatch");
    if (state.acc1.empty()) {
        state.acc1.resize(params.size());
        state.acc2.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.acc1[i] = Matrix::Zero(params[i]->rows(), params[i]->cols());
            state.acc2[i] = Matrix::Zero(params[i]->rows(), params[i]->cols());
        }
    }
    if (state.acc1.size() != params.size())
        throw std::invalid_argument("step_optimizer: parameter set changed between steps");

    ++state.step_count;
    const double lr = state.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g_raw = *grads[i];
        if (p.rows() != g_raw.rows() || p.cols() != g_raw.cols()) {
            std::ostringstream oss;
            oss << "step_optimizer: shape mismatch at parameter " << i << " (" << p.rows() << "x"
                << p.cols() << " vs " << g_raw.rows() << "x" << g_raw.cols() << ")";
            throw std::invalid_argument(oss.str());
        }
        const Matrix g = g_raw + state.weight_decay * p;
        Matrix& a1 = state.acc1[i];
        Matrix& a2 = state.acc2[i];
        switch (state.kind) {
            case OptimizerKind::SGD: {
                a1 = state.momentum * a1 + g;
                p -= lr * a1;
                break;
            }
            case OptimizerKind::Adam: {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                a1 = b1 * a1 + (1.0 - b1) * g;
                a2 = b2 * a2 + (1.0 - b2) * g.cwiseProduct(g);
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
                p.array() -= lr * (a1.array() / c1) / ((a2.array() / c2).sqrt() + eps);
                break;
            }
            case OptimizerKind::Adagrad: {
                constexpr double eps = 1e-10;
                a1 += g.cwiseProduct(g);
                p.array() -= lr * g.array() / (a1.array().sqrt() + eps);
                break;
            }
            case OptimizerKind::Adadelta: {
                constexpr double rho = 0.9, eps = 1e-6;
                a1 = rho * a1 + (1.0 - rho) * g.cwiseProduct(g);
                const Matrix dx =
                    ((a2.array() + eps).sqrt() / (a1.array() + eps).sqrt() * g.array()).matrix();
                a2 = rho * a2 + (1.0 - rho) * dx.cwiseProduct(dx);
                p -= lr * dx;
                break;
            }
            case OptimizerKind::RMSProp: {
                constexpr double alpha = 0.99, eps = 1e-8;
                a1 = alpha * a1 + (1.0 - alpha) * g.cwiseProduct(g);
                const Matrix scaled = (g.array() / (a1.array().sqrt() + eps)).matrix();
                if (state.momentum > 0.0) {
                    a2 = state.momentum * a2 + scaled;
                    p -= lr * a2;
                } else {
                    p -= lr * scaled;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(NetworkModel& model, const std::vector<Sample>& split,
                    std::size_t eval_batch) {
    if (split.empty()) throw std::invalid_argument("evaluate: empty split");
    EvalResult res;
    std::vector<int> indices(split.size());
    std::iota(indices.begin(), indices.end(), 0);
    Matrix x;
    std::vector<int> y;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < split.size(); begin += eval_batch) {
        const std::size_t end = std::min(begin + eval_batch, split.size());
        make_batch(split, indices, begin, end, x, y);
        ForwardResult fwd = forward(model, x, /*eval_mode=*/true);
        res.ops += fwd.ops;
        res.samples += end - begin;
        const auto [loss, dlogits] = softmax_cross_entropy(fwd.logits, y);
        (void)dlogits;
        loss_sum += loss * static_cast<double>(end - begin);
        for (Eigen::Index b = 0; b < fwd.logits.rows(); ++b) {
            Eigen::Index argmax = 0;
            fwd.logits.row(b).maxCoeff(&argmax);
            if (static_cast<int>(argmax) == y[static_cast<std::size_t>(b)]) ++correct;
        }
    }
    res.loss = loss_sum / static_cast<double>(split.size());
    res.top1_accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
    return res;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

// Trainable parameter slots in layer order; the slot list must stay stable
// across steps so optimizer accumulators line up.
void collect_params(NetworkModel& model, GradientSet& grads, std::vector<Matrix*>& params,
                    std::vector<const Matrix*>& grad_ptrs) {
    params.clear();
    grad_ptrs.clear();
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        Layer& layer = model.layers[li];
        if (!layer.has_params()) continue;
        LayerGrads& g = grads.layers[li];
        if (layer.state.mode == LayerMode::ShiftPS) {
            params.push_back(&layer.state.raw_powers);
            grad_ptrs.push_back(&g.raw_powers);
            params.push_back(&layer.state.raw_signs);
            grad_ptrs.push_back(&g.raw_signs);
        } else {
            params.push_back(&layer.state.float_weights);
            grad_ptrs.push_back(&g.weight);
        }
        params.push_back(&layer.state.bias);
        grad_ptrs.push_back(&g.bias);
    }
}

}  // namespace

TrainResult train(NetworkModel model, const DatasetSplits& splits,
                  const HyperparameterConfig& config, int fidelity_depth, std::uint64_t seed,
                  const TrainOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    options.energy_model.validate();

    const int eligible = model.eligible_layer_count();
    const int depth = std::min(fidelity_depth, eligible);
    if (depth < 0) throw std::invalid_argument("train: negative fidelity depth");
    model = convert_to_shift(std::move(model), depth, config.shift_type, config.weight_bits,
                             config.fmt(), config.rounding);
    model.rng.seed(mix_seed(seed, 0x726e64ULL));  // per-run stochastic-rounding stream

    OptimizerState opt = make_optimizer(config);
    TrainOutcome out;
    OpCounts ops;
    std::uint64_t samples = 0;

    std::vector<int> order(splits.train.size());
    std::iota(order.begin(), order.end(), 0);
    Matrix x;
    std::vector<int> y;
    std::vector<Matrix*> params;
    std::vector<const Matrix*> grad_ptrs;

    bool diverged = false;
    for (int epoch = 0; epoch < config.epochs && !diverged; ++epoch) {
        Rng shuffle_rng(mix_seed(seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)));
        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(begin + static_cast<std::size_t>(config.batch_size), order.size());
            make_batch(splits.train, order, begin, end, x, y);
            GradientSet grads;
            try {
                grads = backward(model, x, y);
            } catch (const NumericError&) {
                diverged = true;
                break;
            }
            if (!std::isfinite(grads.loss)) {
                diverged = true;
                break;
            }
            ops += grads.ops;
            samples += end - begin;
            loss_sum += grads.loss * static_cast<double>(end - begin);
            seen += end - begin;
            collect_params(model, grads, params, grad_ptrs);
            step_optimizer(opt, params, grad_ptrs);
        }
        if (diverged) break;
        out.epochs_run = epoch + 1;
        if (options.record_curve) {
            // Curve evaluations are reporting extras; their ops stay out of
            // the energy bill so curve-recording runs match HPO runs.
            EvalResult val = evaluate(model, splits.val, options.eval_batch);
            out.curve.push_back({epoch, loss_sum / static_cast<double>(seen), val.top1_accuracy});
        }
    }

    if (diverged) {
        out.diverged = true;
        out.val_loss = std::numeric_limits<double>::infinity();
        out.val_accuracy = 0.0;
        out.test_accuracy = 0.0;
    } else {
        EvalResult val = evaluate(model, splits.val, options.eval_batch);
        ops += val.ops;
        samples += val.samples;
        out.val_loss = val.loss;
        out.val_accuracy = val.top1_accuracy;
        EvalResult test = evaluate(model, splits.test, options.eval_batch);
        if (options.include_test_energy) {
            ops += test.ops;
            samples += test.samples;
        }
        out.test_accuracy = test.top1_accuracy;
    }

    out.energy = estimate_energy(ops, samples, options.energy_model);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.energy.wall_seconds = out.wall_seconds;
    return TrainResult{std::move(model), std::move(out)};
}

}  // namespace shiftopt
