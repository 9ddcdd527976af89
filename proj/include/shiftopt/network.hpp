#pragma once

// Sequential network container: dense / conv2d / relu / maxpool2d / flatten
// layers whose parameterized layers run in float or shift form. Shift layers
// quantize weights on the fly (Q) or materialize them from trainable raw
// power/sign parameters (PS), quantize input activations onto a fixed-point
// grid, and are costed as shift+add+sign-flip MACs instead of multiply+add.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shiftopt/shift_quant.hpp"

namespace shiftopt {

enum class LayerKind { Dense, Conv2d, Relu, MaxPool2d, Flatten };
enum class LayerMode { Float, ShiftQ, ShiftPS };
enum class ShiftType { Q, PS };

struct TensorShape {
    int channels = 1;
    int height = 1;
    int width = 1;
    int features() const { return channels * height * width; }
    bool operator==(const TensorShape& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int in_features = 0, out_features = 0;           // dense
    int in_channels = 0, out_channels = 0;           // conv2d
    int kernel = 0, stride = 1;                      // conv2d
    int window = 0, pool_stride = 0;                 // maxpool2d

    static LayerSpec dense(int in_features, int out_features);
    static LayerSpec conv2d(int in_channels, int out_channels, int kernel, int stride = 1);
    static LayerSpec relu();
    static LayerSpec maxpool2d(int window, int stride);
    static LayerSpec flatten();
};

struct OpCounts {
    std::uint64_t multiplies = 0;
    std::uint64_t shifts = 0;
    std::uint64_t adds = 0;
    std::uint64_t sign_flips = 0;

    OpCounts& operator+=(const OpCounts& o) {
        multiplies += o.multiplies;
        shifts += o.shifts;
        adds += o.adds;
        sign_flips += o.sign_flips;
        return *this;
    }
    friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
    bool operator==(const OpCounts& o) const {
        return multiplies == o.multiplies && shifts == o.shifts && adds == o.adds &&
               sign_flips == o.sign_flips;
    }
};

// Parameter state of a dense/conv layer. float_weights is the master copy and
// stays allocated in every mode; the PS raw parameters exist only in ShiftPS
// mode. Weight matrices are (out x in) with in = Cin*k*k for conv layers (the
// im2col GEMM shape).
struct ShiftLayerState {
    LayerMode mode = LayerMode::Float;
    Matrix float_weights;
    Matrix bias;        // out x 1
    Matrix raw_powers;  // PS trainables
    Matrix raw_signs;
    FixedPointFormat fmt;
    int weight_bits = 5;
    int p_offset = 0;
    RoundingMode rounding = RoundingMode::Deterministic;
};

struct Layer {
    LayerSpec spec;
    ShiftLayerState state;
    TensorShape in_shape, out_shape;

    bool has_params() const {
        return spec.kind == LayerKind::Dense || spec.kind == LayerKind::Conv2d;
    }
};

struct NetworkModel {
    std::vector<Layer> layers;
    TensorShape input_shape;
    int shift_depth = 0;
    Rng rng;  // stochastic-rounding draws during training forwards

    int eligible_layer_count() const;
    long long parameter_count() const;
};

// Raised when a forward pass produces a non-finite intermediate.
struct NumericError : std::runtime_error {
    int layer_index;
    NumericError(int layer, const std::string& msg) : std::runtime_error(msg), layer_index(layer) {}
};

// Builds a float network with fan-in/fan-out scaled uniform init,
// deterministic in `seed`. Throws std::invalid_argument on shape mismatches,
// naming the layer index.
NetworkModel build_network(const std::vector<LayerSpec>& arch, TensorShape input,
                           std::uint64_t seed);

// Converts the first `depth` eligible (dense/conv) layers, counted from the
// input side, to the given shift form; layers past `depth` revert to float.
// Converting to depth d then d' > d equals converting directly to d'.
NetworkModel convert_to_shift(NetworkModel model, int depth, ShiftType type, int weight_bits,
                              FixedPointFormat fmt, RoundingMode rounding);

struct ForwardResult {
    Matrix logits;  // batch x classes
    OpCounts ops;
};

// eval_mode forces deterministic rounding so frozen-model evaluation is pure.
ForwardResult forward(NetworkModel& model, const Matrix& batch, bool eval_mode = false);

struct LayerGrads {
    Matrix weight;      // d/d float_weights (Float and ShiftQ modes)
    Matrix bias;
    Matrix raw_powers;  // ShiftPS mode
    Matrix raw_signs;
};

struct GradientSet {
    std::vector<LayerGrads> layers;  // one entry per model layer; empty mats for non-param layers
    double loss = 0.0;
    Matrix logits;
    OpCounts ops;
};

// Mean softmax cross-entropy over the batch, backpropagated with
// straight-through estimators: every quantizer (round, clamp, fixed-point)
// passes gradient as identity inside its clamp range and zero outside. The
// PS power parameter carries the ln2 chain factor of 2^P; the sign parameter
// passes as identity.
GradientSet backward(NetworkModel& model, const Matrix& batch, const std::vector<int>& targets);

// (mean cross-entropy, d loss / d logits) for a batch of target labels.
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& targets);

// Checkpoint container: versioned JSON holding every layer-state field;
// save/load round-trips bit-exactly.
std::string model_to_json(const NetworkModel& model);
NetworkModel model_from_json(const std::string& text);
void save_model(const NetworkModel& model, const std::string& path);
NetworkModel load_model(const std::string& path);

// FNV-1a hash of the checkpoint serialization; used to assert evaluation purity.
std::uint64_t model_checkpoint_hash(const NetworkModel& model);

std::string to_string(LayerKind kind);
std::string to_string(LayerMode mode);

}  // namespace shiftopt
