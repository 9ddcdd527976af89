#include "shiftopt/hpo/config_space.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace shiftopt {

using json = nlohmann::json;

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::SGD: return "sgd";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::Adagrad: return "adagrad";
        case OptimizerKind::Adadelta: return "adadelta";
        case OptimizerKind::RMSProp: return "rmsprop";
    }
    return "?";
}

std::string to_string(ShiftType type) { return type == ShiftType::Q ? "Q" : "PS"; }

std::string to_string(RoundingMode mode) {
    return mode == RoundingMode::Deterministic ? "deterministic" : "stochastic";
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

OptimizerKind optimizer_from_string(const std::string& name, std::string* mapped) {
    const std::string s = lower(name);
    if (mapped) mapped->clear();
    if (s == "sgd") return OptimizerKind::SGD;
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "adagrad") return OptimizerKind::Adagrad;
    if (s == "adadelta") return OptimizerKind::Adadelta;
    if (s == "rmsprop") return OptimizerKind::RMSProp;
    // Table-1 names outside the supported optimizer set map to the nearest
    // supported kind so paper-derived config files stay loadable.
    if (s == "ranger") {
        if (mapped) *mapped = name + " -> sgd";
        return OptimizerKind::SGD;
    }
    if (s == "radam") {
        if (mapped) *mapped = name + " -> adam";
        return OptimizerKind::Adam;
    }
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

ShiftType shift_type_from_string(const std::string& name) {
    const std::string s = lower(name);
    if (s == "q") return ShiftType::Q;
    if (s == "ps") return ShiftType::PS;
    throw std::invalid_argument("unknown shift type '" + name + "'");
}

RoundingMode rounding_from_string(const std::string& name) {
    const std::string s = lower(name);
    if (s == "deterministic") return RoundingMode::Deterministic;
    if (s == "stochastic") return RoundingMode::Stochastic;
    throw std::invalid_argument("unknown rounding mode '" + name + "'");
}

json HyperparameterConfig::to_json() const {
    return json{{"batch_size", batch_size},
                {"optimizer", to_string(optimizer)},
                {"learning_rate", learning_rate},
                {"momentum", momentum},
                {"epochs", epochs},
                {"weight_bits", weight_bits},
                {"activation_integer_bits", activation_integer_bits},
                {"activation_fraction_bits", activation_fraction_bits},
                {"shift_depth", shift_depth},
                {"shift_type", to_string(shift_type)},
                {"rounding", to_string(rounding)},
                {"weight_decay", weight_decay}};
}

HyperparameterConfig HyperparameterConfig::from_json(const json& j,
                                                     std::string* mapped_optimizer) {
    static const std::set<std::string> kKeys{
        "batch_size",      "optimizer",    "learning_rate",
        "momentum",        "epochs",       "weight_bits",
        "activation_integer_bits",         "activation_fraction_bits",
        "shift_depth",     "shift_type",   "rounding",
        "weight_decay"};
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (!kKeys.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "'");
    for (const auto& key : kKeys)
        if (!j.contains(key))
            throw std::invalid_argument("config: missing key '" + key + "'");

    HyperparameterConfig cfg;
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>(), mapped_optimizer);
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.weight_bits = j.at("weight_bits").get<int>();
    cfg.activation_integer_bits = j.at("activation_integer_bits").get<int>();
    cfg.activation_fraction_bits = j.at("activation_fraction_bits").get<int>();
    cfg.shift_depth = j.at("shift_depth").get<int>();
    cfg.shift_type = shift_type_from_string(j.at("shift_type").get<std::string>());
    cfg.rounding = rounding_from_string(j.at("rounding").get<std::string>());
    cfg.weight_decay = j.at("weight_decay").get<double>();
    return cfg;
}

// ---------------------------------------------------------------------------
// ConfigSpace
// ---------------------------------------------------------------------------

namespace {

// Full Table-1 search space; narrowed spaces must stay inside it.
const ConfigSpace& master_space() {
    static const ConfigSpace space{};
    return space;
}

void check_int_range(const IntRange& r, const IntRange& master, const char* name) {
    if (r.lo > r.hi || r.lo < master.lo || r.hi > master.hi) {
        std::ostringstream oss;
        oss << "config space: " << name << " range [" << r.lo << ", " << r.hi
            << "] outside search space [" << master.lo << ", " << master.hi << "]";
        throw std::invalid_argument(oss.str());
    }
}

void check_real_range(const RealRange& r, const RealRange& master, const char* name) {
    if (!(r.lo <= r.hi) || r.lo < master.lo || r.hi > master.hi) {
        std::ostringstream oss;
        oss << "config space: " << name << " range [" << r.lo << ", " << r.hi
            << "] outside search space [" << master.lo << ", " << master.hi << "]";
        throw std::invalid_argument(oss.str());
    }
}

int clamp_int(int v, const IntRange& r) { return v < r.lo ? r.lo : (v > r.hi ? r.hi : v); }
double clamp_real(double v, const RealRange& r) {
    return v < r.lo ? r.lo : (v > r.hi ? r.hi : v);
}

template <typename T>
void check_in(const std::vector<T>& allowed, T v, const char* name) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
        throw std::invalid_argument(std::string("config: ") + name + " value not in allowed set");
}

template <typename T>
void check_subset(const std::vector<T>& sub, const std::vector<T>& master, const char* name) {
    if (sub.empty())
        throw std::invalid_argument(std::string("config space: ") + name + " set is empty");
    for (const T& v : sub)
        if (std::find(master.begin(), master.end(), v) == master.end())
            throw std::invalid_argument(std::string("config space: ") + name +
                                        " value outside search space");
}

}  // namespace

void ConfigSpace::validate() const {
    const ConfigSpace& m = master_space();
    check_int_range(batch_size, m.batch_size, "batch_size");
    check_subset(optimizers, m.optimizers, "optimizer");
    check_real_range(learning_rate, m.learning_rate, "learning_rate");
    check_real_range(momentum, m.momentum, "momentum");
    check_int_range(epochs, m.epochs, "epochs");
    check_int_range(weight_bits, m.weight_bits, "weight_bits");
    check_int_range(activation_integer_bits, m.activation_integer_bits, "activation_integer_bits");
    check_int_range(activation_fraction_bits, m.activation_fraction_bits,
                    "activation_fraction_bits");
    check_int_range(shift_depth, m.shift_depth, "shift_depth");
    check_subset(shift_types, m.shift_types, "shift_type");
    check_subset(roundings, m.roundings, "rounding");
    check_real_range(weight_decay, m.weight_decay, "weight_decay");
}

void ConfigSpace::validate_config(const HyperparameterConfig& cfg) const {
    auto in_int = [](int v, const IntRange& r, const char* name) {
        if (v < r.lo || v > r.hi) {
            std::ostringstream oss;
            oss << "config: " << name << " = " << v << " outside [" << r.lo << ", " << r.hi << "]";
            throw std::invalid_argument(oss.str());
        }
    };
    auto in_real = [](double v, const RealRange& r, const char* name) {
        if (!(v >= r.lo && v <= r.hi)) {
            std::ostringstream oss;
            oss << "config: " << name << " = " << v << " outside [" << r.lo << ", " << r.hi << "]";
            throw std::invalid_argument(oss.str());
        }
    };
    in_int(cfg.batch_size, batch_size, "batch_size");
    check_in(optimizers, cfg.optimizer, "optimizer");
    in_real(cfg.learning_rate, learning_rate, "learning_rate");
    in_real(cfg.momentum, momentum, "momentum");
    in_int(cfg.epochs, epochs, "epochs");
    in_int(cfg.weight_bits, weight_bits, "weight_bits");
    in_int(cfg.activation_integer_bits, activation_integer_bits, "activation_integer_bits");
    in_int(cfg.activation_fraction_bits, activation_fraction_bits, "activation_fraction_bits");
    in_int(cfg.shift_depth, shift_depth, "shift_depth");
    check_in(shift_types, cfg.shift_type, "shift_type");
    check_in(roundings, cfg.rounding, "rounding");
    in_real(cfg.weight_decay, weight_decay, "weight_decay");
}

bool ConfigSpace::contains(const HyperparameterConfig& cfg) const {
    try {
        validate_config(cfg);
        return true;
    } catch (const std::invalid_argument&) {
        return false;
    }
}

HyperparameterConfig ConfigSpace::default_config() const {
    HyperparameterConfig cfg;  // member initializers carry the default column
    cfg.epochs = 200;          // nominal default sits above the search range
    cfg.batch_size = clamp_int(cfg.batch_size, batch_size);
    if (std::find(optimizers.begin(), optimizers.end(), cfg.optimizer) == optimizers.end())
        cfg.optimizer = optimizers.front();
    cfg.learning_rate = clamp_real(cfg.learning_rate, learning_rate);
    cfg.momentum = clamp_real(cfg.momentum, momentum);
    cfg.epochs = clamp_int(cfg.epochs, epochs);
    cfg.weight_bits = clamp_int(cfg.weight_bits, weight_bits);
    cfg.activation_integer_bits = clamp_int(cfg.activation_integer_bits, activation_integer_bits);
    cfg.activation_fraction_bits =
        clamp_int(cfg.activation_fraction_bits, activation_fraction_bits);
    cfg.shift_depth = clamp_int(cfg.shift_depth, shift_depth);
    if (std::find(shift_types.begin(), shift_types.end(), cfg.shift_type) == shift_types.end())
        cfg.shift_type = shift_types.front();
    if (std::find(roundings.begin(), roundings.end(), cfg.rounding) == roundings.end())
        cfg.rounding = roundings.front();
    cfg.weight_decay = clamp_real(cfg.weight_decay, weight_decay);
    validate_config(cfg);
    return cfg;
}

HyperparameterConfig ConfigSpace::sample(Rng& rng) const {
    HyperparameterConfig cfg;
    cfg.batch_size = static_cast<int>(uniform_int(rng, batch_size.lo, batch_size.hi));
    cfg.optimizer = optimizers[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<long long>(optimizers.size()) - 1))];
    cfg.learning_rate = log_uniform(rng, learning_rate.lo, learning_rate.hi);
    cfg.momentum = uniform_real(rng, momentum.lo, momentum.hi);
    cfg.epochs = static_cast<int>(uniform_int(rng, epochs.lo, epochs.hi));
    cfg.weight_bits = static_cast<int>(uniform_int(rng, weight_bits.lo, weight_bits.hi));
    cfg.activation_integer_bits = static_cast<int>(
        uniform_int(rng, activation_integer_bits.lo, activation_integer_bits.hi));
    cfg.activation_fraction_bits = static_cast<int>(
        uniform_int(rng, activation_fraction_bits.lo, activation_fraction_bits.hi));
    cfg.shift_depth = static_cast<int>(uniform_int(rng, shift_depth.lo, shift_depth.hi));
    cfg.shift_type = shift_types[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<long long>(shift_types.size()) - 1))];
    cfg.rounding = roundings[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<long long>(roundings.size()) - 1))];
    cfg.weight_decay = log_uniform(rng, weight_decay.lo, weight_decay.hi);
    validate_config(cfg);
    return cfg;
}

void ConfigSpace::apply_overrides(const json& overrides) {
    if (!overrides.is_object())
        throw std::invalid_argument("config space overrides: expected a JSON object");
    for (const auto& [key, value] : overrides.items()) {
        auto int_pair = [&](IntRange& r) {
            if (!value.is_array() || value.size() != 2)
                throw std::invalid_argument("config space: '" + key + "' needs [lo, hi]");
            r = IntRange{value[0].get<int>(), value[1].get<int>()};
        };
        auto real_pair = [&](RealRange& r) {
            if (!value.is_array() || value.size() != 2)
                throw std::invalid_argument("config space: '" + key + "' needs [lo, hi]");
            r = RealRange{value[0].get<double>(), value[1].get<double>()};
        };
        if (key == "batch_size") int_pair(batch_size);
        else if (key == "optimizer") {
            optimizers.clear();
            for (const auto& v : value) optimizers.push_back(optimizer_from_string(v.get<std::string>()));
        } else if (key == "learning_rate") real_pair(learning_rate);
        else if (key == "momentum") real_pair(momentum);
        else if (key == "epochs") int_pair(epochs);
        else if (key == "weight_bits") int_pair(weight_bits);
        else if (key == "activation_integer_bits") int_pair(activation_integer_bits);
        else if (key == "activation_fraction_bits") int_pair(activation_fraction_bits);
        else if (key == "shift_depth") int_pair(shift_depth);
        else if (key == "shift_type") {
            shift_types.clear();
            for (const auto& v : value) shift_types.push_back(shift_type_from_string(v.get<std::string>()));
        } else if (key == "rounding") {
            roundings.clear();
            for (const auto& v : value) roundings.push_back(rounding_from_string(v.get<std::string>()));
        } else if (key == "weight_decay") real_pair(weight_decay);
        else throw std::invalid_argument("config space: unknown key '" + key + "'");
    }
    validate();
}

}  // namespace shiftopt
