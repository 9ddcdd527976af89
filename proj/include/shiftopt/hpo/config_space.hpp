#pragma once

// The DSNN hyperparameter space: 12 dimensions covering training
// hyperparameters (batch size, optimizer, learning rate, momentum, epochs,
// weight decay) and the shift-specific ones (weight bits, activation
// integer/fraction bits, shift depth, shift type, rounding mode). Real-valued
// learning rate and weight decay sample log-uniformly.

#include <string>
#include <vector>

#include <json.hpp>

#include "shiftopt/network.hpp"
#include "shiftopt/rng.hpp"

namespace shiftopt {

enum class OptimizerKind { SGD, Adam, Adagrad, Adadelta, RMSProp };

std::string to_string(OptimizerKind kind);
std::string to_string(ShiftType type);
std::string to_string(RoundingMode mode);

// One concrete configuration. Canonical serialization (sorted keys, exact
// real round-trip) doubles as the identity used for deduplication.
struct HyperparameterConfig {
    int batch_size = 128;
    OptimizerKind optimizer = OptimizerKind::SGD;
    double learning_rate = 0.1;
    double momentum = 0.9;
    int epochs = 100;
    int weight_bits = 5;
    int activation_integer_bits = 16;
    int activation_fraction_bits = 16;
    int shift_depth = 20;
    ShiftType shift_type = ShiftType::PS;
    RoundingMode rounding = RoundingMode::Deterministic;
    double weight_decay = 1e-4;

    FixedPointFormat fmt() const { return {activation_integer_bits, activation_fraction_bits}; }

    nlohmann::json to_json() const;
    std::string canonical_string() const { return to_json().dump(); }

    // Strict parse: every key required, unknown keys rejected by name. The
    // out-of-scope Table 1 optimizers are mapped (Ranger -> SGD,
    // RAdam -> Adam) and reported through *mapped_optimizer.
    static HyperparameterConfig from_json(const nlohmann::json& j,
                                          std::string* mapped_optimizer = nullptr);

    bool operator==(const HyperparameterConfig& o) const {
        return canonical_string() == o.canonical_string();
    }
};

struct IntRange {
    int lo = 0, hi = 0;
};
struct RealRange {
    double lo = 0.0, hi = 0.0;
};

struct ConfigSpace {
    IntRange batch_size{32, 128};
    std::vector<OptimizerKind> optimizers{OptimizerKind::SGD, OptimizerKind::Adam,
                                          OptimizerKind::Adagrad, OptimizerKind::Adadelta,
                                          OptimizerKind::RMSProp};
    RealRange learning_rate{1e-3, 1e-1};  // log scale
    RealRange momentum{0.0, 0.9};
    IntRange epochs{5, 100};
    IntRange weight_bits{2, 8};
    IntRange activation_integer_bits{2, 32};
    IntRange activation_fraction_bits{2, 32};
    IntRange shift_depth{0, 20};
    std::vector<ShiftType> shift_types{ShiftType::Q, ShiftType::PS};
    std::vector<RoundingMode> roundings{RoundingMode::Deterministic, RoundingMode::Stochastic};
    RealRange weight_decay{1e-6, 1e-2};  // log scale

    // Bounds must stay inside the full search space above.
    void validate() const;
    void validate_config(const HyperparameterConfig& cfg) const;
    bool contains(const HyperparameterConfig& cfg) const;

    // Search-space defaults (the paper's default column), clamped into the
    // active bounds. The nominal default of 200 epochs sits outside the
    // epoch range and clamps to its upper bound.
    HyperparameterConfig default_config() const;

    HyperparameterConfig sample(Rng& rng) const;

    // Narrowing overrides from an experiment file: {"epochs": [5, 15], ...}.
    // Unknown keys are rejected by name; the result is re-validated.
    void apply_overrides(const nlohmann::json& overrides);
};

OptimizerKind optimizer_from_string(const std::string& name, std::string* mapped = nullptr);
ShiftType shift_type_from_string(const std::string& name);
RoundingMode rounding_from_string(const std::string& name);

}  // namespace shiftopt
