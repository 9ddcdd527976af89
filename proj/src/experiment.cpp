#include "shiftopt/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace shiftopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
    if (!j.is_object())
        throw std::invalid_argument(std::string("experiment: ") + where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw std::invalid_argument(std::string("experiment: unknown key '") + key + "' in " +
                                        where);
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / p).string();
}

void require_file(const std::string& path) {
    if (!fs::exists(path))
        throw std::invalid_argument("experiment: referenced path does not exist: '" + path + "'");
}

DatasetSpec parse_dataset(const json& j, const std::string& base_dir) {
    DatasetSpec d;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "synthetic") {
        check_keys(j, {"kind", "classes", "height", "width", "train", "val", "test", "seed",
                       "noise"},
                   "dataset");
        d.kind = DatasetSpec::Kind::Synthetic;
        if (j.contains("classes")) d.classes = j.at("classes").get<int>();
        if (j.contains("height")) d.height = j.at("height").get<int>();
        if (j.contains("width")) d.width = j.at("width").get<int>();
        if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("noise")) d.noise = j.at("noise").get<double>();
    } else if (kind == "idx") {
        check_keys(j, {"kind", "train_images", "train_labels", "test_images", "test_labels",
                       "train", "val", "test"},
                   "dataset");
        d.kind = DatasetSpec::Kind::Idx;
        d.train_images = resolve_path(base_dir, j.at("train_images").get<std::string>());
        d.train_labels = resolve_path(base_dir, j.at("train_labels").get<std::string>());
        d.test_images = resolve_path(base_dir, j.at("test_images").get<std::string>());
        d.test_labels = resolve_path(base_dir, j.at("test_labels").get<std::string>());
        require_file(d.train_images);
        require_file(d.train_labels);
        require_file(d.test_images);
        require_file(d.test_labels);
    } else if (kind == "cifar10") {
        check_keys(j, {"kind", "batches", "train", "val", "test"}, "dataset");
        d.kind = DatasetSpec::Kind::Cifar10;
        for (const auto& b : j.at("batches")) {
            d.batches.push_back(resolve_path(base_dir, b.get<std::string>()));
            require_file(d.batches.back());
        }
    } else {
        throw std::invalid_argument("experiment: unknown dataset kind '" + kind + "'");
    }
    d.train_count = j.at("train").get<std::size_t>();
    d.val_count = j.at("val").get<std::size_t>();
    d.test_count = j.at("test").get<std::size_t>();
    if (d.train_count == 0 || d.val_count == 0 || d.test_count == 0)
        throw std::invalid_argument("experiment: split counts must be positive");
    return d;
}

ArchSpec parse_arch(const json& j) {
    ArchSpec a;
    check_keys(j, {"preset", "channels", "hidden"}, "arch");
    a.preset = j.at("preset").get<std::string>();
    if (a.preset != "conv4" && a.preset != "mlp")
        throw std::invalid_argument("experiment: unknown arch preset '" + a.preset + "'");
    if (j.contains("channels")) a.channels = j.at("channels").get<std::vector<int>>();
    if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<int>>();
    if (a.preset == "conv4" && a.channels.size() != 4)
        throw std::invalid_argument("experiment: conv4 preset needs exactly 4 channel counts");
    if (a.preset == "mlp" && a.hidden.empty())
        throw std::invalid_argument("experiment: mlp preset needs at least one hidden width");
    return a;
}

EnergyModel parse_energy(const json& j) {
    EnergyModel m;
    check_keys(j,
               {"joules_per_multiply", "joules_per_add", "joules_per_shift",
                "joules_per_sign_flip", "overhead_joules_per_sample",
                "carbon_intensity_g_per_kwh"},
               "energy");
    if (j.contains("joules_per_multiply")) m.joules_per_multiply = j.at("joules_per_multiply").get<double>();
    if (j.contains("joules_per_add")) m.joules_per_add = j.at("joules_per_add").get<double>();
    if (j.contains("joules_per_shift")) m.joules_per_shift = j.at("joules_per_shift").get<double>();
    if (j.contains("joules_per_sign_flip"))
        m.joules_per_sign_flip = j.at("joules_per_sign_flip").get<double>();
    if (j.contains("overhead_joules_per_sample"))
        m.overhead_joules_per_sample = j.at("overhead_joules_per_sample").get<double>();
    if (j.contains("carbon_intensity_g_per_kwh"))
        m.carbon_intensity_g_per_kwh = j.at("carbon_intensity_g_per_kwh").get<double>();
    m.validate();
    return m;
}

HpoSettings parse_hpo(const json& j) {
    HpoSettings h;
    check_keys(j, {"budget", "eta", "min_fidelity", "max_fidelity", "seed", "workers"}, "hpo");
    if (j.contains("budget")) h.budget = j.at("budget").get<int>();
    if (j.contains("eta")) h.eta = j.at("eta").get<int>();
    if (j.contains("min_fidelity")) h.min_fidelity = j.at("min_fidelity").get<int>();
    if (j.contains("max_fidelity")) h.max_fidelity = j.at("max_fidelity").get<int>();
    if (j.contains("seed")) h.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("workers")) h.workers = j.at("workers").get<int>();
    if (h.budget < 1) throw std::invalid_argument("experiment: hpo budget must be >= 1");
    if (h.workers < 1) throw std::invalid_argument("experiment: hpo workers must be >= 1");
    return h;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("experiment: malformed JSON (") + e.what() + ")");
    }
    check_keys(j, {"schema", "dataset", "arch", "space", "energy", "hpo", "include_test_energy",
                   "out"},
               "experiment");
    if (j.contains("schema") && j.at("schema").get<std::string>() != "shiftopt-experiment-v1")
        throw std::invalid_argument("experiment: unsupported schema tag");

    ExperimentConfig cfg;
    cfg.dataset = parse_dataset(j.at("dataset"), base_dir);
    cfg.arch = parse_arch(j.at("arch"));
    if (j.contains("space")) cfg.space.apply_overrides(j.at("space"));
    if (j.contains("energy")) cfg.energy_model = parse_energy(j.at("energy"));
    if (j.contains("hpo")) cfg.hpo = parse_hpo(j.at("hpo"));
    if (j.contains("include_test_energy"))
        cfg.include_test_energy = j.at("include_test_energy").get<bool>();
    if (j.contains("out")) cfg.out_dir = resolve_path(base_dir, j.at("out").get<std::string>());
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("experiment: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str(), fs::path(path).parent_path().string());
}

DatasetSplits ExperimentConfig::build_dataset() const {
    switch (dataset.kind) {
        case DatasetSpec::Kind::Synthetic:
            return make_synthetic_blobs(dataset.classes, dataset.height, dataset.width,
                                        dataset.train_count, dataset.val_count,
                                        dataset.test_count, dataset.seed, dataset.noise);
        case DatasetSpec::Kind::Idx:
            return load_idx_splits(dataset.train_images, dataset.train_labels,
                                   dataset.test_images, dataset.test_labels, dataset.train_count,
                                   dataset.val_count, dataset.test_count);
        case DatasetSpec::Kind::Cifar10:
            return load_cifar10_splits(dataset.batches, dataset.train_count, dataset.val_count,
                                       dataset.test_count);
    }
    throw std::logic_error("experiment: unreachable dataset kind");
}

std::vector<LayerSpec> ExperimentConfig::build_arch(const TensorShape& input,
                                                    int num_classes) const {
    std::vector<LayerSpec> layers;
    if (arch.preset == "conv4") {
        const auto& c = arch.channels;
        layers.push_back(LayerSpec::conv2d(input.channels, c[0], 3));
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::conv2d(c[0], c[1], 3));
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::maxpool2d(2, 2));
        layers.push_back(LayerSpec::conv2d(c[1], c[2], 3));
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::conv2d(c[2], c[3], 3));
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::maxpool2d(2, 2));
        layers.push_back(LayerSpec::flatten());

        // Final spatial extent after the two conv pairs and pools.
        int h = input.height, w = input.width;
        h -= 4; w -= 4;                     // two valid 3x3 convs
        h = (h - 2) / 2 + 1; w = (w - 2) / 2 + 1;
        h -= 4; w -= 4;
        h = (h - 2) / 2 + 1; w = (w - 2) / 2 + 1;
        if (h < 1 || w < 1)
            throw std::invalid_argument("experiment: input too small for the conv4 preset");
        layers.push_back(LayerSpec::dense(c[3] * h * w, num_classes));
    } else {  // mlp
        int in = input.features();
        for (const int width : arch.hidden) {
            layers.push_back(LayerSpec::dense(in, width));
            layers.push_back(LayerSpec::relu());
            in = width;
        }
        layers.push_back(LayerSpec::dense(in, num_classes));
    }
    return layers;
}

}  // namespace shiftopt
