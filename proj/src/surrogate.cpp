#include "shiftopt/hpo/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

namespace shiftopt {

std::vector<double> encode_config(const HyperparameterConfig& cfg, int fidelity) {
    return {static_cast<double>(cfg.batch_size),
            static_cast<double>(static_cast<int>(cfg.optimizer)),
            std::log(cfg.learning_rate),
            cfg.momentum,
            static_cast<double>(cfg.epochs),
            static_cast<double>(cfg.weight_bits),
            static_cast<double>(cfg.activation_integer_bits),
            static_cast<double>(cfg.activation_fraction_bits),
            static_cast<double>(cfg.shift_depth),
            cfg.shift_type == ShiftType::Q ? 0.0 : 1.0,
            cfg.rounding == RoundingMode::Deterministic ? 0.0 : 1.0,
            std::log(cfg.weight_decay),
            static_cast<double>(fidelity)};
}

double RegressionTree::predict(const std::vector<double>& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const Node& n = nodes[static_cast<std::size_t>(node)];
        node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
}

void SurrogateModel::predict(const std::vector<double>& x, double& mean, double& variance) const {
    mean = 0.0;
    for (const auto& t : trees) mean += t.predict(x);
    mean /= static_cast<double>(trees.size());
    variance = 0.0;
    for (const auto& t : trees) {
        const double d = t.predict(x) - mean;
        variance += d * d;
    }
    variance /= static_cast<double>(trees.size());
}

namespace {

struct TreeBuilder {
    const std::vector<std::vector<double>>& features;
    const std::vector<double>& targets;
    Rng& rng;
    int min_leaf;
    RegressionTree tree;

    int make_leaf(const std::vector<std::size_t>& idx) {
        double mean = 0.0;
        for (const auto i : idx) mean += targets[i];
        mean /= static_cast<double>(idx.size());
        tree.nodes.push_back({-1, 0.0, -1, -1, mean});
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    int build(const std::vector<std::size_t>& idx) {
        if (idx.size() < 2 * static_cast<std::size_t>(min_leaf)) return make_leaf(idx);

        const int dims = static_cast<int>(features[idx[0]].size());
        // A few attempts at a random dimension with nonzero spread; midpoint
        // threshold between the node's min and max in that dimension.
        for (int attempt = 0; attempt < dims; ++attempt) {
            const int f = static_cast<int>(uniform_int(rng, 0, dims - 1));
            double lo = features[idx[0]][static_cast<std::size_t>(f)];
            double hi = lo;
            for (const auto i : idx) {
                lo = std::min(lo, features[i][static_cast<std::size_t>(f)]);
                hi = std::max(hi, features[i][static_cast<std::size_t>(f)]);
            }
            if (hi <= lo) continue;
            const double threshold = 0.5 * (lo + hi);
            std::vector<std::size_t> left, right;
            for (const auto i : idx)
                (features[i][static_cast<std::size_t>(f)] <= threshold ? left : right).push_back(i);
            if (left.size() < static_cast<std::size_t>(min_leaf) ||
                right.size() < static_cast<std::size_t>(min_leaf))
                continue;
            const int node_id = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({f, threshold, -1, -1, 0.0});
            const int l = build(left);
            const int r = build(right);
            tree.nodes[static_cast<std::size_t>(node_id)].left = l;
            tree.nodes[static_cast<std::size_t>(node_id)].right = r;
            return node_id;
        }
        return make_leaf(idx);
    }
};

}  // namespace

SurrogateModel fit_forest(const std::vector<std::vector<double>>& features,
                          const std::vector<double>& targets, Rng& rng, int n_trees,
                          int min_leaf) {
    SurrogateModel model;
    if (features.size() < 2 || features.size() != targets.size()) return model;  // invalid

    model.incumbent = *std::min_element(targets.begin(), targets.end());
    const auto n = features.size();
    for (int t = 0; t < n_trees; ++t) {
        std::vector<std::size_t> bootstrap(n);
        for (auto& i : bootstrap)
            i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(n) - 1));
        TreeBuilder builder{features, targets, rng, min_leaf, {}};
        builder.build(bootstrap);
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

SurrogateModel fit_surrogate(const RunHistory& history, const ScalarizationWeights& weights,
                             Rng& rng) {
    std::size_t finite = 0;
    for (const auto& r : history.records)
        if (r.objectives.finite()) ++finite;
    if (finite < 2) return SurrogateModel{};

    const ObjectiveNormalizer norm = ObjectiveNormalizer::fit(history);
    std::vector<std::vector<double>> features;
    std::vector<double> targets;
    features.reserve(history.size());
    targets.reserve(history.size());
    for (const auto& r : history.records) {
        features.push_back(encode_config(r.config, r.fidelity));
        targets.push_back(parego_scalarize(norm.apply(r.objectives), weights));
    }
    return fit_forest(features, targets, rng);
}

SurrogateModel fit_surrogate_loss(const RunHistory& history, Rng& rng) {
    std::size_t finite = 0;
    for (const auto& r : history.records)
        if (std::isfinite(r.objectives.loss)) ++finite;
    if (finite < 2) return SurrogateModel{};

    const ObjectiveNormalizer norm = ObjectiveNormalizer::fit(history);
    std::vector<std::vector<double>> features;
    std::vector<double> targets;
    for (const auto& r : history.records) {
        features.push_back(encode_config(r.config, r.fidelity));
        targets.push_back(norm.apply(r.objectives)[0]);
    }
    return fit_forest(features, targets, rng);
}

double expected_improvement(double mean, double variance, double incumbent) {
    const double improvement = incumbent - mean;
    if (variance <= 0.0) return std::max(improvement, 0.0);
    const double sigma = std::sqrt(variance);
    const double z = improvement / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
    const double ei = improvement * cdf + sigma * pdf;
    return std::max(ei, 0.0);
}

HyperparameterConfig suggest(const ConfigSpace& space, const SurrogateModel& surrogate,
                             const RunHistory& history, Rng& rng, int target_fidelity,
                             std::size_t suggestion_index, int n_candidates) {
    std::set<std::string> evaluated;
    for (const auto& r : history.records)
        if (r.fidelity == target_fidelity) evaluated.insert(r.config.canonical_string());
    auto is_novel = [&](const HyperparameterConfig& cfg) {
        return evaluated.find(cfg.canonical_string()) == evaluated.end();
    };

    // SMAC-style interleaving: every 5th pick explores at random; so does any
    // call made before a surrogate can be fit.
    const bool pure_random = (suggestion_index % 5 == 4) || !surrogate.valid();
    if (pure_random) {
        for (int i = 0; i < 100; ++i) {
            HyperparameterConfig cfg = space.sample(rng);
            if (is_novel(cfg)) return cfg;
        }
        return space.sample(rng);  // space exhausted at this fidelity
    }

    bool found = false;
    HyperparameterConfig best;
    double best_ei = -1.0;
    for (int i = 0; i < n_candidates; ++i) {
        HyperparameterConfig cfg = space.sample(rng);
        if (!is_novel(cfg)) continue;
        double mean, variance;
        surrogate.predict(encode_config(cfg, target_fidelity), mean, variance);
        const double ei = expected_improvement(mean, variance, surrogate.incumbent);
        if (!found || ei > best_ei) {
            best = std::move(cfg);
            best_ei = ei;
            found = true;
        }
    }
    if (found) return best;
    return space.sample(rng);  // every candidate was a duplicate
}

}  // namespace shiftopt
