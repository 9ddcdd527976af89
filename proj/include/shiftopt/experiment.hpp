#pragma once

// Experiment files: JSON describing the dataset (IDX / CIFAR-10 binary /
// synthetic), the network architecture preset, optional search-space and
// energy-model overrides, and the HPO settings. Parsing is strict: unknown
// keys are rejected by name and referenced paths must exist at load time.

#include <cstdint>
#include <string>
#include <vector>

#include "shiftopt/data.hpp"
#include "shiftopt/energy.hpp"
#include "shiftopt/hpo/config_space.hpp"
#include "shiftopt/network.hpp"

namespace shiftopt {

struct DatasetSpec {
    enum class Kind { Synthetic, Idx, Cifar10 };
    Kind kind = Kind::Synthetic;

    std::size_t train_count = 0, val_count = 0, test_count = 0;

    // synthetic
    int classes = 10;
    int height = 16, width = 16;
    std::uint64_t seed = 1234;
    double noise = 0.1;

    // idx
    std::string train_images, train_labels, test_images, test_labels;

    // cifar10
    std::vector<std::string> batches;
};

struct ArchSpec {
    std::string preset = "conv4";     // "conv4" or "mlp"
    std::vector<int> channels{4, 8, 8, 16};  // conv4
    std::vector<int> hidden{32};             // mlp
};

struct HpoSettings {
    int budget = 16;
    int eta = 2;
    int min_fidelity = 1;
    int max_fidelity = 0;  // 0 = eligible layer count of the architecture
    std::uint64_t seed = 0;
    int workers = 1;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    ArchSpec arch;
    ConfigSpace space;
    EnergyModel energy_model;
    HpoSettings hpo;
    bool include_test_energy = false;
    std::string out_dir = ".";

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text, const std::string& base_dir);

    DatasetSplits build_dataset() const;
    std::vector<LayerSpec> build_arch(const TensorShape& input, int num_classes) const;
};

}  // namespace shiftopt
