#include "shiftopt/network.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace shiftopt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Layer specs and shape resolution
// ---------------------------------------------------------------------------

LayerSpec LayerSpec::dense(int in_features, int out_features) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::conv2d(int in_channels, int out_channels, int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::maxpool2d(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.window = window;
    s.pool_stride = stride;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

std::string to_string(LayerMode mode) {
    switch (mode) {
        case LayerMode::Float: return "float";
        case LayerMode::ShiftQ: return "shift_q";
        case LayerMode::ShiftPS: return "shift_ps";
    }
    return "?";
}

namespace {

[[noreturn]] void build_error(std::size_t layer_index, const std::string& msg) {
    std::ostringstream oss;
    oss << "build_network: layer " << layer_index << ": " << msg;
    throw std::invalid_argument(oss.str());
}

TensorShape resolve_out_shape(const LayerSpec& spec, const TensorShape& in, std::size_t index) {
    switch (spec.kind) {
        case LayerKind::Dense: {
            if (spec.in_features <= 0 || spec.out_features <= 0)
                build_error(index, "dense dims must be positive");
            if (spec.in_features != in.features()) {
                std::ostringstream oss;
                oss << "dense expects " << spec.in_features << " input features, got "
                    << in.features();
                build_error(index, oss.str());
            }
            return TensorShape{spec.out_features, 1, 1};
        }
        case LayerKind::Conv2d: {
            if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 ||
                spec.stride <= 0)
                build_error(index, "conv2d dims must be positive");
            if (spec.in_channels != in.channels)
                build_error(index, "conv2d input channel mismatch");
            if (spec.kernel > in.height || spec.kernel > in.width)
                build_error(index, "conv2d kernel exceeds input spatial size");
            const int oh = (in.height - spec.kernel) / spec.stride + 1;
            const int ow = (in.width - spec.kernel) / spec.stride + 1;
            return TensorShape{spec.out_channels, oh, ow};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool2d: {
            if (spec.window <= 0 || spec.pool_stride <= 0)
                build_error(index, "maxpool2d dims must be positive");
            if (spec.window > in.height || spec.window > in.width)
                build_error(index, "maxpool2d window exceeds input spatial size");
            const int oh = (in.height - spec.window) / spec.pool_stride + 1;
            const int ow = (in.width - spec.window) / spec.pool_stride + 1;
            return TensorShape{in.channels, oh, ow};
        }
        case LayerKind::Flatten:
            return TensorShape{in.features(), 1, 1};
    }
    build_error(index, "unknown layer kind");
}

// Weight matrix shape for a parameterized layer: (out x in), where conv
// weights take the im2col GEMM form (Cout x Cin*k*k).
std::pair<int, int> weight_dims(const Layer& layer) {
    if (layer.spec.kind == LayerKind::Dense)
        return {layer.spec.out_features, layer.spec.in_features};
    return {layer.spec.out_channels, layer.spec.in_channels * layer.spec.kernel * layer.spec.kernel};
}

void init_layer_params(Layer& layer, Rng& rng) {
    const auto [out, in] = weight_dims(layer);
    int fan_in = in, fan_out = out;
    if (layer.spec.kind == LayerKind::Conv2d) {
        const int k2 = layer.spec.kernel * layer.spec.kernel;
        fan_in = layer.spec.in_channels * k2;
        fan_out = layer.spec.out_channels * k2;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.state.float_weights.resize(out, in);
    for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j)
            layer.state.float_weights(i, j) = uniform_real(rng, -bound, bound);
    layer.state.bias = Matrix::Zero(out, 1);
}

}  // namespace

int NetworkModel::eligible_layer_count() const {
    int n = 0;
    for (const auto& l : layers)
        if (l.has_params()) ++n;
    return n;
}

long long NetworkModel::parameter_count() const {
    long long n = 0;
    for (const auto& l : layers)
        if (l.has_params())
            n += l.state.float_weights.size() + l.state.bias.size();
    return n;
}

NetworkModel build_network(const std::vector<LayerSpec>& arch, TensorShape input,
                           std::uint64_t seed) {
    if (arch.empty()) throw std::invalid_argument("build_network: empty architecture");
    if (input.features() <= 0) throw std::invalid_argument("build_network: empty input shape");
    if (arch.back().kind != LayerKind::Dense)
        throw std::invalid_argument("build_network: architecture must end in a dense classifier");

    NetworkModel model;
    model.input_shape = input;
    model.rng.seed(mix_seed(seed, 0x6e657477ULL));  // stochastic-rounding stream

    Rng init_rng(mix_seed(seed, 0x696e6974ULL));
    TensorShape shape = input;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        Layer layer;
        layer.spec = arch[i];
        layer.in_shape = shape;
        layer.out_shape = resolve_out_shape(layer.spec, shape, i);
        if (layer.has_params()) init_layer_params(layer, init_rng);
        shape = layer.out_shape;
        model.layers.push_back(std::move(layer));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Float <-> shift conversion
// ---------------------------------------------------------------------------

namespace {

// PS raw parameters seeded from the float master: raw power = log2|w|,
// raw sign = sign(w). Zero weights get the minimum power and sign 0.
void derive_ps_params(Layer& layer) {
    const Matrix& w = layer.state.float_weights;
    const int p_lo = power_min(layer.state.weight_bits, layer.state.p_offset);
    layer.state.raw_powers.resize(w.rows(), w.cols());
    layer.state.raw_signs.resize(w.rows(), w.cols());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            const double v = w(i, j);
            if (v == 0.0) {
                layer.state.raw_powers(i, j) = static_cast<double>(p_lo);
                layer.state.raw_signs(i, j) = 0.0;
            } else {
                layer.state.raw_powers(i, j) = std::log2(std::abs(v));
                layer.state.raw_signs(i, j) = v > 0.0 ? 1.0 : -1.0;
            }
        }
    }
}

// Materialize the float master from the PS parameters (deterministic
// rounding); used when a PS layer reverts to float or switches to Q.
void materialize_ps_to_float(Layer& layer) {
    Rng dummy(0);
    const ShiftWeights sw =
        quantize_ps(layer.state.raw_powers, layer.state.raw_signs, layer.state.weight_bits,
                    RoundingMode::Deterministic, dummy, layer.state.p_offset);
    layer.state.float_weights = dequantize(sw);
}

}  // namespace

NetworkModel convert_to_shift(NetworkModel model, int depth, ShiftType type, int weight_bits,
                              FixedPointFormat fmt, RoundingMode rounding) {
    const int eligible = model.eligible_layer_count();
    if (depth < 0 || depth > eligible) {
        std::ostringstream oss;
        oss << "convert_to_shift: depth " << depth << " outside [0, " << eligible << "]";
        throw std::invalid_argument(oss.str());
    }
    fmt.validate();
    detail::check_weight_bits(weight_bits);

    const LayerMode target = type == ShiftType::Q ? LayerMode::ShiftQ : LayerMode::ShiftPS;
    int idx = 0;
    for (auto& layer : model.layers) {
        if (!layer.has_params()) continue;
        ShiftLayerState& st = layer.state;
        if (idx < depth) {
            if (st.mode == LayerMode::ShiftPS && target == LayerMode::ShiftQ)
                materialize_ps_to_float(layer);
            st.weight_bits = weight_bits;
            st.fmt = fmt;
            st.rounding = rounding;
            if (target == LayerMode::ShiftPS && st.mode != LayerMode::ShiftPS)
                derive_ps_params(layer);
            if (target == LayerMode::ShiftQ) {
                st.raw_powers.resize(0, 0);
                st.raw_signs.resize(0, 0);
            }
            st.mode = target;
        } else if (st.mode != LayerMode::Float) {
            if (st.mode == LayerMode::ShiftPS) materialize_ps_to_float(layer);
            st.raw_powers.resize(0, 0);
            st.raw_signs.resize(0, 0);
            st.mode = LayerMode::Float;
        }
        ++idx;
    }
    model.shift_depth = depth;
    return model;
}

// ---------------------------------------------------------------------------
// Forward pass (with optional trace for backprop)
// ---------------------------------------------------------------------------

namespace {

struct LayerTrace {
    Matrix input;            // raw layer input
    Matrix quant_input;      // post activation-quant (shift layers); else == input
    Matrix act_mask;         // activation-quant clamp mask (shift layers)
    Matrix w_eff;            // effective weights used by the GEMM
    Matrix w_ste_mask;       // power-clamp mask: Q -> master grads, PS -> raw_power grads
    Matrix ps_pow2;          // PS: 2^P after clamp
    Matrix ps_signs;         // PS: materialized signs
    Matrix col;              // conv: im2col of quant_input
    std::vector<Eigen::Index> pool_argmax;
};

Matrix im2col(const Matrix& x, const TensorShape& in, int kernel, int stride, int oh, int ow) {
    const auto batch = x.rows();
    const int hw = in.height * in.width;
    const int k2 = kernel * kernel;
    Matrix col(in.channels * k2, batch * oh * ow);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index c_idx = b * oh * ow + oy * ow + ox;
                for (int c = 0; c < in.channels; ++c) {
                    const int base = c * hw;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int iy = oy * stride + ky;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int ix = ox * stride + kx;
                            col(c * k2 + ky * kernel + kx, c_idx) = x(b, base + iy * in.width + ix);
                        }
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const Matrix& dcol, Matrix& dx, const TensorShape& in, int kernel, int stride,
                int oh, int ow) {
    const auto batch = dx.rows();
    const int hw = in.height * in.width;
    const int k2 = kernel * kernel;
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index c_idx = b * oh * ow + oy * ow + ox;
                for (int c = 0; c < in.channels; ++c) {
                    const int base = c * hw;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int iy = oy * stride + ky;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int ix = ox * stride + kx;
                            dx(b, base + iy * in.width + ix) += dcol(c * k2 + ky * kernel + kx, c_idx);
                        }
                    }
                }
            }
        }
    }
}

// Quantized effective weights plus the straight-through masks, consuming the
// same rng draws as the public quantize_* functions.
void materialize_weights(const ShiftLayerState& st, RoundingMode mode, Rng& rng, LayerTrace& tr) {
    const int p_lo = power_min(st.weight_bits, st.p_offset);
    const int p_hi = power_max(st.weight_bits, st.p_offset);
    if (st.mode == LayerMode::ShiftQ) {
        const Matrix& w = st.float_weights;
        tr.w_eff.resize(w.rows(), w.cols());
        tr.w_ste_mask.resize(w.rows(), w.cols());
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                int sign, power;
                bool in_range;
                detail::quantize_q_entry(w(i, j), p_lo, p_hi, mode, rng, sign, power, in_range);
                tr.w_eff(i, j) = sign * std::ldexp(1.0, power);
                tr.w_ste_mask(i, j) = in_range ? 1.0 : 0.0;
            }
        }
    } else {  // ShiftPS
        const Matrix& rp = st.raw_powers;
        tr.w_eff.resize(rp.rows(), rp.cols());
        tr.w_ste_mask.resize(rp.rows(), rp.cols());
        tr.ps_pow2.resize(rp.rows(), rp.cols());
        tr.ps_signs.resize(rp.rows(), rp.cols());
        for (Eigen::Index j = 0; j < rp.cols(); ++j) {
            for (Eigen::Index i = 0; i < rp.rows(); ++i) {
                int sign, power;
                bool in_range;
                detail::quantize_ps_entry(rp(i, j), st.raw_signs(i, j), p_lo, p_hi, mode, rng,
                                          sign, power, in_range);
                const double pow2 = std::ldexp(1.0, power);
                tr.ps_pow2(i, j) = pow2;
                tr.ps_signs(i, j) = static_cast<double>(sign);
                tr.w_eff(i, j) = sign * pow2;
                tr.w_ste_mask(i, j) = in_range ? 1.0 : 0.0;
            }
        }
    }
}

OpCounts gemm_ops(std::uint64_t macs, bool shift_weights) {
    OpCounts c;
    if (shift_weights) {
        c.shifts = macs;
        c.adds = macs;
        c.sign_flips = macs;
    } else {
        c.multiplies = macs;
        c.adds = macs;
    }
    return c;
}

ForwardResult forward_impl(NetworkModel& model, const Matrix& batch, bool eval_mode,
                           std::vector<LayerTrace>* traces) {
    if (batch.cols() != model.input_shape.features()) {
        std::ostringstream oss;
        oss << "forward: batch has " << batch.cols() << " features, model expects "
            << model.input_shape.features();
        throw std::invalid_argument(oss.str());
    }
    if (traces) traces->assign(model.layers.size(), LayerTrace{});

    Matrix x = batch;
    OpCounts ops;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        Layer& layer = model.layers[li];
        LayerTrace local;
        LayerTrace& tr = traces ? (*traces)[li] : local;
        const bool is_shift = layer.has_params() && layer.state.mode != LayerMode::Float;
        Matrix y;

        switch (layer.spec.kind) {
            case LayerKind::Dense:
            case LayerKind::Conv2d: {
                const ShiftLayerState& st = layer.state;
                if (traces) tr.input = x;
                if (is_shift) {
                    const double lo = st.fmt.min_value();
                    const double hi = st.fmt.max_value();
                    tr.quant_input = quantize_activation(x, st.fmt);
                    if (traces)
                        tr.act_mask = ((x.array() >= lo) && (x.array() <= hi)).cast<double>();
                    const RoundingMode mode =
                        eval_mode ? RoundingMode::Deterministic : st.rounding;
                    materialize_weights(st, mode, model.rng, tr);
                } else {
                    tr.quant_input = x;
                    tr.w_eff = st.float_weights;
                }

                if (layer.spec.kind == LayerKind::Dense) {
                    y = tr.quant_input * tr.w_eff.transpose();
                    y.rowwise() += st.bias.col(0).transpose();
                    ops += gemm_ops(static_cast<std::uint64_t>(batch.rows()) *
                                        static_cast<std::uint64_t>(tr.w_eff.size()),
                                    is_shift);
                } else {
                    const int oh = layer.out_shape.height;
                    const int ow = layer.out_shape.width;
                    tr.col = im2col(tr.quant_input, layer.in_shape, layer.spec.kernel,
                                    layer.spec.stride, oh, ow);
                    const Matrix y_col = tr.w_eff * tr.col;  // Cout x B*oh*ow
                    const int out_hw = oh * ow;
                    y.resize(x.rows(), layer.out_shape.features());
                    for (Eigen::Index b = 0; b < x.rows(); ++b)
                        for (int co = 0; co < layer.spec.out_channels; ++co)
                            for (int p = 0; p < out_hw; ++p)
                                y(b, co * out_hw + p) = y_col(co, b * out_hw + p) + st.bias(co, 0);
                    ops += gemm_ops(static_cast<std::uint64_t>(y_col.cols()) *
                                        static_cast<std::uint64_t>(tr.w_eff.size()),
                                    is_shift);
                }
                if (!traces) {
                    tr.quant_input.resize(0, 0);
                    tr.w_eff.resize(0, 0);
                }
                break;
            }
            case LayerKind::Relu: {
                if (traces) tr.input = x;
                y = x.cwiseMax(0.0);
                break;
            }
            case LayerKind::MaxPool2d: {
                const TensorShape& in = layer.in_shape;
                const int oh = layer.out_shape.height;
                const int ow = layer.out_shape.width;
                const int hw = in.height * in.width;
                const int out_hw = oh * ow;
                y.resize(x.rows(), layer.out_shape.features());
                if (traces) tr.pool_argmax.resize(static_cast<std::size_t>(x.rows()) *
                                                  layer.out_shape.features());
                for (Eigen::Index b = 0; b < x.rows(); ++b) {
                    for (int c = 0; c < in.channels; ++c) {
                        for (int oy = 0; oy < oh; ++oy) {
                            for (int ox = 0; ox < ow; ++ox) {
                                double best = -std::numeric_limits<double>::infinity();
                                Eigen::Index best_idx = 0;
                                for (int ky = 0; ky < layer.spec.window; ++ky) {
                                    const int iy = oy * layer.spec.pool_stride + ky;
                                    for (int kx = 0; kx < layer.spec.window; ++kx) {
                                        const int ix = ox * layer.spec.pool_stride + kx;
                                        const Eigen::Index idx = c * hw + iy * in.width + ix;
                                        if (x(b, idx) > best) {
                                            best = x(b, idx);
                                            best_idx = idx;
                                        }
                                    }
                                }
                                const Eigen::Index o_idx = c * out_hw + oy * ow + ox;
                                y(b, o_idx) = best;
                                if (traces)
                                    tr.pool_argmax[b * layer.out_shape.features() + o_idx] =
                                        best_idx;
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::Flatten: {
                y = x;  // layout is already flat; shape bookkeeping only
                break;
            }
        }

        if (!y.allFinite()) {
            std::ostringstream oss;
            oss << "forward: non-finite intermediate at layer " << li << " ("
                << to_string(layer.spec.kind) << ")";
            throw NumericError(static_cast<int>(li), oss.str());
        }
        x = std::move(y);
    }
    return ForwardResult{std::move(x), ops};
}

}  // namespace

ForwardResult forward(NetworkModel& model, const Matrix& batch, bool eval_mode) {
    return forward_impl(model, batch, eval_mode, nullptr);
}

// ---------------------------------------------------------------------------
// Loss and backward pass
// ---------------------------------------------------------------------------

std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& targets) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size())
        throw std::invalid_argument("softmax_cross_entropy: batch/target size mismatch");
    const auto batch = logits.rows();
    Matrix probs(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const double m = logits.row(b).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(b).array() - m).exp();
        const double z = e.sum();
        probs.row(b) = e / z;
        loss -= std::log(std::max(probs(b, targets[static_cast<std::size_t>(b)]), 1e-300));
    }
    loss /= static_cast<double>(batch);
    Matrix dlogits = probs;
    for (Eigen::Index b = 0; b < batch; ++b)
        dlogits(b, targets[static_cast<std::size_t>(b)]) -= 1.0;
    dlogits /= static_cast<double>(batch);
    return {loss, std::move(dlogits)};
}

GradientSet backward(NetworkModel& model, const Matrix& batch, const std::vector<int>& targets) {
    std::vector<LayerTrace> traces;
    ForwardResult fwd = forward_impl(model, batch, /*eval_mode=*/false, &traces);

    GradientSet gs;
    gs.layers.resize(model.layers.size());
    gs.ops = fwd.ops;

    auto [loss, dx] = softmax_cross_entropy(fwd.logits, targets);
    gs.loss = loss;
    gs.logits = std::move(fwd.logits);

    constexpr double ln2 = std::numbers::ln2;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        Layer& layer = model.layers[li];
        LayerTrace& tr = traces[li];
        LayerGrads& g = gs.layers[li];
        const bool is_shift = layer.has_params() && layer.state.mode != LayerMode::Float;

        switch (layer.spec.kind) {
            case LayerKind::Dense: {
                const std::uint64_t macs = static_cast<std::uint64_t>(batch.rows()) *
                                           static_cast<std::uint64_t>(tr.w_eff.size());
                Matrix dw_eff = dx.transpose() * tr.quant_input;
                g.bias = dx.colwise().sum().transpose();
                Matrix dprev = dx * tr.w_eff;
                gs.ops += gemm_ops(macs, is_shift);      // grad wrt input, through shift weights
                gs.ops += gemm_ops(macs, false);         // weight-grad accumulation in float
                if (is_shift) dprev.array() *= tr.act_mask.array();
                switch (layer.state.mode) {
                    case LayerMode::Float: g.weight = std::move(dw_eff); break;
                    case LayerMode::ShiftQ:
                        g.weight = dw_eff.cwiseProduct(tr.w_ste_mask);
                        break;
                    case LayerMode::ShiftPS:
                        g.raw_powers = (dw_eff.array() * tr.ps_signs.array() *
                                        tr.ps_pow2.array() * ln2 * tr.w_ste_mask.array())
                                           .matrix();
                        g.raw_signs = dw_eff.cwiseProduct(tr.ps_pow2);
                        break;
                }
                dx = std::move(dprev);
                break;
            }
            case LayerKind::Conv2d: {
                const int oh = layer.out_shape.height;
                const int ow = layer.out_shape.width;
                const int out_hw = oh * ow;
                const auto bsz = batch.rows();
                Matrix dy_col(layer.spec.out_channels, bsz * out_hw);
                for (Eigen::Index b = 0; b < bsz; ++b)
                    for (int co = 0; co < layer.spec.out_channels; ++co)
                        for (int p = 0; p < out_hw; ++p)
                            dy_col(co, b * out_hw + p) = dx(b, co * out_hw + p);

                const std::uint64_t macs = static_cast<std::uint64_t>(dy_col.cols()) *
                                           static_cast<std::uint64_t>(tr.w_eff.size());
                Matrix dw_eff = dy_col * tr.col.transpose();
                g.bias = dy_col.rowwise().sum();
                Matrix dcol = tr.w_eff.transpose() * dy_col;
                gs.ops += gemm_ops(macs, is_shift);
                gs.ops += gemm_ops(macs, false);

                Matrix dprev = Matrix::Zero(bsz, layer.in_shape.features());
                col2im_add(dcol, dprev, layer.in_shape, layer.spec.kernel, layer.spec.stride, oh,
                           ow);
                if (is_shift) dprev.array() *= tr.act_mask.array();
                switch (layer.state.mode) {
                    case LayerMode::Float: g.weight = std::move(dw_eff); break;
                    case LayerMode::ShiftQ:
                        g.weight = dw_eff.cwiseProduct(tr.w_ste_mask);
                        break;
                    case LayerMode::ShiftPS:
                        g.raw_powers = (dw_eff.array() * tr.ps_signs.array() *
                                        tr.ps_pow2.array() * ln2 * tr.w_ste_mask.array())
                                           .matrix();
                        g.raw_signs = dw_eff.cwiseProduct(tr.ps_pow2);
                        break;
                }
                dx = std::move(dprev);
                break;
            }
            case LayerKind::Relu: {
                dx.array() *= (tr.input.array() > 0.0).cast<double>();
                break;
            }
            case LayerKind::MaxPool2d: {
                Matrix dprev = Matrix::Zero(batch.rows(), layer.in_shape.features());
                const int out_f = layer.out_shape.features();
                for (Eigen::Index b = 0; b < batch.rows(); ++b)
                    for (int o = 0; o < out_f; ++o)
                        dprev(b, tr.pool_argmax[b * out_f + o]) += dx(b, o);
                dx = std::move(dprev);
                break;
            }
            case LayerKind::Flatten:
                break;
        }
    }
    return gs;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            data.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != m.size())
        throw std::invalid_argument("checkpoint: matrix payload size mismatch");
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2)
            m(i, j2) = data[k++].get<double>();
    return m;
}

LayerKind kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool2d") return LayerKind::MaxPool2d;
    if (s == "flatten") return LayerKind::Flatten;
    throw std::invalid_argument("checkpoint: unknown layer kind '" + s + "'");
}

LayerMode mode_from_string(const std::string& s) {
    if (s == "float") return LayerMode::Float;
    if (s == "shift_q") return LayerMode::ShiftQ;
    if (s == "shift_ps") return LayerMode::ShiftPS;
    throw std::invalid_argument("checkpoint: unknown layer mode '" + s + "'");
}

constexpr const char* kCheckpointSchema = "shiftopt-checkpoint-v1";

}  // namespace

std::string model_to_json(const NetworkModel& model) {
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json spec{{"kind", to_string(layer.spec.kind)}};
        switch (layer.spec.kind) {
            case LayerKind::Dense:
                spec["in_features"] = layer.spec.in_features;
                spec["out_features"] = layer.spec.out_features;
                break;
            case LayerKind::Conv2d:
                spec["in_channels"] = layer.spec.in_channels;
                spec["out_channels"] = layer.spec.out_channels;
                spec["kernel"] = layer.spec.kernel;
                spec["stride"] = layer.spec.stride;
                break;
            case LayerKind::MaxPool2d:
                spec["window"] = layer.spec.window;
                spec["stride"] = layer.spec.pool_stride;
                break;
            default:
                break;
        }
        json entry{{"spec", std::move(spec)}};
        if (layer.has_params()) {
            const ShiftLayerState& st = layer.state;
            json state{{"mode", to_string(st.mode)},
                       {"float_weights", matrix_to_json(st.float_weights)},
                       {"bias", matrix_to_json(st.bias)},
                       {"fmt", json{{"integer_bits", st.fmt.integer_bits},
                                    {"fraction_bits", st.fmt.fraction_bits}}},
                       {"weight_bits", st.weight_bits},
                       {"p_offset", st.p_offset},
                       {"rounding", st.rounding == RoundingMode::Deterministic ? "deterministic"
                                                                               : "stochastic"}};
            if (st.mode == LayerMode::ShiftPS) {
                state["raw_powers"] = matrix_to_json(st.raw_powers);
                state["raw_signs"] = matrix_to_json(st.raw_signs);
            }
            entry["state"] = std::move(state);
        }
        layers.push_back(std::move(entry));
    }
    json doc{{"schema", kCheckpointSchema},
             {"input_shape", json{{"channels", model.input_shape.channels},
                                  {"height", model.input_shape.height},
                                  {"width", model.input_shape.width}}},
             {"shift_depth", model.shift_depth},
             {"layers", std::move(layers)}};
    return doc.dump();
}

NetworkModel model_from_json(const std::string& text) {
    const json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != kCheckpointSchema)
        throw std::invalid_argument("checkpoint: unsupported schema");

    const auto& ishape = doc.at("input_shape");
    TensorShape input{ishape.at("channels").get<int>(), ishape.at("height").get<int>(),
                      ishape.at("width").get<int>()};

    std::vector<LayerSpec> arch;
    for (const auto& entry : doc.at("layers")) {
        const auto& spec = entry.at("spec");
        const LayerKind kind = kind_from_string(spec.at("kind").get<std::string>());
        switch (kind) {
            case LayerKind::Dense:
                arch.push_back(LayerSpec::dense(spec.at("in_features").get<int>(),
                                                spec.at("out_features").get<int>()));
                break;
            case LayerKind::Conv2d:
                arch.push_back(LayerSpec::conv2d(spec.at("in_channels").get<int>(),
                                                 spec.at("out_channels").get<int>(),
                                                 spec.at("kernel").get<int>(),
                                                 spec.at("stride").get<int>()));
                break;
            case LayerKind::Relu: arch.push_back(LayerSpec::relu()); break;
            case LayerKind::MaxPool2d:
                arch.push_back(
                    LayerSpec::maxpool2d(spec.at("window").get<int>(), spec.at("stride").get<int>()));
                break;
            case LayerKind::Flatten: arch.push_back(LayerSpec::flatten()); break;
        }
    }

    NetworkModel model = build_network(arch, input, /*seed=*/0xC0DEULL);
    model.shift_depth = doc.at("shift_depth").get<int>();
    const auto& layers = doc.at("layers");
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        const auto& state = layers[i].at("state");
        ShiftLayerState& st = model.layers[i].state;
        st.mode = mode_from_string(state.at("mode").get<std::string>());
        st.float_weights = matrix_from_json(state.at("float_weights"));
        st.bias = matrix_from_json(state.at("bias"));
        st.fmt.integer_bits = state.at("fmt").at("integer_bits").get<int>();
        st.fmt.fraction_bits = state.at("fmt").at("fraction_bits").get<int>();
        st.weight_bits = state.at("weight_bits").get<int>();
        st.p_offset = state.at("p_offset").get<int>();
        st.rounding = state.at("rounding").get<std::string>() == "stochastic"
                          ? RoundingMode::Stochastic
                          : RoundingMode::Deterministic;
        if (st.mode == LayerMode::ShiftPS) {
            st.raw_powers = matrix_from_json(state.at("raw_powers"));
            st.raw_signs = matrix_from_json(state.at("raw_signs"));
        }
    }
    return model;
}

void save_model(const NetworkModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open '" + path + "'");
    out << model_to_json(model);
    if (!out) throw std::runtime_error("save_model: write failed for '" + path + "'");
}

NetworkModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

std::uint64_t model_checkpoint_hash(const NetworkModel& model) {
    const std::string s = model_to_json(model);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace shiftopt
