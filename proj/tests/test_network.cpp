#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "shiftopt/network.hpp"

using namespace shiftopt;

namespace {

std::vector<LayerSpec> tiny_mlp(int in, int hidden, int classes) {
    return {LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, classes)};
}

std::vector<LayerSpec> tiny_cnn() {
    return {LayerSpec::conv2d(1, 2, 3), LayerSpec::relu(),      LayerSpec::maxpool2d(2, 2),
            LayerSpec::conv2d(2, 3, 2), LayerSpec::relu(),      LayerSpec::flatten(),
            LayerSpec::dense(3, 4)};
}

bool mat_eq(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

Matrix random_batch(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = uniform_real(rng, -1.0, 1.0);
    return m;
}

double loss_of(NetworkModel& model, const Matrix& x, const std::vector<int>& y) {
    const ForwardResult fwd = forward(model, x, /*eval_mode=*/true);
    return softmax_cross_entropy(fwd.logits, y).first;
}

// Central finite differences over every trainable parameter.
void check_gradients(NetworkModel& model, const Matrix& x, const std::vector<int>& y) {
    const GradientSet gs = backward(model, x, y);
    const double eps = 1e-4;
    long long checked = 0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        Layer& layer = model.layers[li];
        if (!layer.has_params()) continue;
        auto check_param = [&](Matrix& param, const Matrix& grad) {
            REQUIRE(grad.rows() == param.rows());
            REQUIRE(grad.cols() == param.cols());
            for (Eigen::Index i = 0; i < param.size(); ++i) {
                const double saved = param(i);
                param(i) = saved + eps;
                const double up = loss_of(model, x, y);
                param(i) = saved - eps;
                const double down = loss_of(model, x, y);
                param(i) = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double denom = std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
                CHECK(std::abs(fd - grad(i)) / denom < 1e-3);
                ++checked;
            }
        };
        check_param(layer.state.float_weights, gs.layers[li].weight);
        check_param(layer.state.bias, gs.layers[li].bias);
    }
    CHECK(checked > 0);
    CHECK(checked <= 100);
}

}  // namespace

TEST_CASE("build_network determinism and validation") {
    const auto arch = tiny_mlp(4, 3, 2);
    NetworkModel a = build_network(arch, TensorShape{1, 1, 4}, 42);
    NetworkModel b = build_network(arch, TensorShape{1, 1, 4}, 42);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (!a.layers[i].has_params()) continue;
        CHECK(mat_eq(a.layers[i].state.float_weights, b.layers[i].state.float_weights));
        CHECK(mat_eq(a.layers[i].state.bias, b.layers[i].state.bias));
    }
    NetworkModel c = build_network(arch, TensorShape{1, 1, 4}, 43);
    CHECK(!mat_eq(a.layers[0].state.float_weights, c.layers[0].state.float_weights));
    CHECK(a.shift_depth == 0);

    CHECK_THROWS_AS(build_network({}, TensorShape{1, 1, 4}, 0), std::invalid_argument);
    // conv output features mismatch with the next dense layer
    std::vector<LayerSpec> bad{LayerSpec::conv2d(1, 2, 3), LayerSpec::flatten(),
                               LayerSpec::dense(99, 4)};
    CHECK_THROWS_WITH_AS(build_network(bad, TensorShape{1, 5, 5}, 0), doctest::Contains("layer 2"),
                         std::invalid_argument);
    // must end in a dense classifier
    std::vector<LayerSpec> no_dense{LayerSpec::conv2d(1, 2, 3), LayerSpec::relu()};
    CHECK_THROWS_AS(build_network(no_dense, TensorShape{1, 5, 5}, 0), std::invalid_argument);
}

TEST_CASE("zero shift depth matches the float forward bit for bit") {
    Rng rng(3);
    NetworkModel model = build_network(tiny_cnn(), TensorShape{1, 7, 7}, 11);
    const Matrix x = random_batch(5, 49, rng);
    const Matrix float_logits = forward(model, x).logits;

    NetworkModel converted = convert_to_shift(model, 0, ShiftType::Q, 5, FixedPointFormat{8, 8},
                                              RoundingMode::Deterministic);
    const Matrix converted_logits = forward(converted, x).logits;
    CHECK(mat_eq(float_logits, converted_logits));
}

TEST_CASE("convert_to_shift depth handling") {
    NetworkModel model = build_network(tiny_cnn(), TensorShape{1, 7, 7}, 11);
    CHECK(model.eligible_layer_count() == 3);

    SUBCASE("depth bounds") {
        CHECK_THROWS_AS(convert_to_shift(model, 4, ShiftType::Q, 5, FixedPointFormat{8, 8},
                                         RoundingMode::Deterministic),
                        std::invalid_argument);
        CHECK_THROWS_AS(convert_to_shift(model, -1, ShiftType::Q, 5, FixedPointFormat{8, 8},
                                         RoundingMode::Deterministic),
                        std::invalid_argument);
    }

    SUBCASE("full depth converts every eligible layer") {
        NetworkModel full = convert_to_shift(model, 3, ShiftType::PS, 5, FixedPointFormat{8, 8},
                                             RoundingMode::Deterministic);
        CHECK(full.shift_depth == 3);
        for (const auto& layer : full.layers)
            if (layer.has_params()) CHECK(layer.state.mode == LayerMode::ShiftPS);
    }

    SUBCASE("conversion is monotone in depth") {
        for (const ShiftType type : {ShiftType::Q, ShiftType::PS}) {
            NetworkModel two = convert_to_shift(model, 2, type, 4, FixedPointFormat{6, 6},
                                                RoundingMode::Deterministic);
            NetworkModel chained = convert_to_shift(std::move(two), 3, type, 4,
                                                    FixedPointFormat{6, 6},
                                                    RoundingMode::Deterministic);
            NetworkModel direct = convert_to_shift(model, 3, type, 4, FixedPointFormat{6, 6},
                                                   RoundingMode::Deterministic);
            CHECK(model_to_json(chained) == model_to_json(direct));
        }
    }

    SUBCASE("conversion order is input side first") {
        NetworkModel one = convert_to_shift(model, 1, ShiftType::Q, 5, FixedPointFormat{8, 8},
                                            RoundingMode::Deterministic);
        CHECK(one.layers[0].state.mode == LayerMode::ShiftQ);   // first conv
        CHECK(one.layers[3].state.mode == LayerMode::Float);    // second conv
        CHECK(one.layers[6].state.mode == LayerMode::Float);    // classifier
    }
}

TEST_CASE("depth 16 of 20 eligible layers: 16 shift, 4 float") {
    // A 20-layer dense stack standing in for the 20-layer backbone.
    std::vector<LayerSpec> arch;
    for (int i = 0; i < 19; ++i) arch.push_back(LayerSpec::dense(6, 6));
    arch.push_back(LayerSpec::dense(6, 4));
    NetworkModel model = build_network(arch, TensorShape{1, 1, 6}, 2);
    REQUIRE(model.eligible_layer_count() == 20);

    model = convert_to_shift(std::move(model), 16, ShiftType::PS, 7, FixedPointFormat{29, 10},
                             RoundingMode::Deterministic);
    int shift_layers = 0, float_layers = 0;
    for (const auto& layer : model.layers) {
        if (!layer.has_params()) continue;
        (layer.state.mode == LayerMode::ShiftPS ? shift_layers : float_layers) += 1;
    }
    CHECK(shift_layers == 16);
    CHECK(float_layers == 4);
    CHECK(model.shift_depth == 16);
}

TEST_CASE("single shift MAC: weight 0.25, input 2.0") {
    NetworkModel model = build_network({LayerSpec::dense(1, 1)}, TensorShape{1, 1, 1}, 0);
    model.layers[0].state.float_weights(0, 0) = 0.25;
    model.layers[0].state.bias(0, 0) = 0.0;
    model = convert_to_shift(std::move(model), 1, ShiftType::Q, 5, FixedPointFormat{8, 8},
                             RoundingMode::Deterministic);
    Matrix x(1, 1);
    x << 2.0;
    const ForwardResult fwd = forward(model, x);
    CHECK(fwd.logits(0, 0) == 0.5);
    CHECK(fwd.ops.shifts == 1);
    CHECK(fwd.ops.adds == 1);
    CHECK(fwd.ops.sign_flips == 1);
    CHECK(fwd.ops.multiplies == 0);
}

TEST_CASE("op counts: dense m x n layer on batch 1") {
    const int m = 6, n = 4;
    NetworkModel model = build_network({LayerSpec::dense(n, m)}, TensorShape{1, 1, n}, 1);
    Rng rng(2);
    const Matrix x = random_batch(1, n, rng);

    const ForwardResult float_fwd = forward(model, x);
    CHECK(float_fwd.ops.multiplies == static_cast<std::uint64_t>(m) * n);
    CHECK(float_fwd.ops.adds == static_cast<std::uint64_t>(m) * n);
    CHECK(float_fwd.ops.shifts == 0);

    NetworkModel shift = convert_to_shift(std::move(model), 1, ShiftType::Q, 5,
                                          FixedPointFormat{8, 8}, RoundingMode::Deterministic);
    const ForwardResult shift_fwd = forward(shift, x);
    CHECK(shift_fwd.ops.shifts == static_cast<std::uint64_t>(m) * n);
    CHECK(shift_fwd.ops.adds == static_cast<std::uint64_t>(m) * n);
    CHECK(shift_fwd.ops.sign_flips == static_cast<std::uint64_t>(m) * n);
    CHECK(shift_fwd.ops.multiplies == 0);
}

TEST_CASE("op-count additivity across layers") {
    Rng rng(9);
    NetworkModel model = build_network(tiny_cnn(), TensorShape{1, 7, 7}, 5);
    const Matrix x = random_batch(3, 49, rng);
    const ForwardResult whole = forward(model, x);

    // 7x7 -> conv3x3 -> 5x5 -> pool2 -> 2x2 -> conv2x2 -> 1x1 -> dense(3 -> 4).
    const std::uint64_t batch = 3;
    const std::uint64_t conv1 = batch * 25 * (2 * 9);
    const std::uint64_t conv2 = batch * 1 * (3 * 8);
    const std::uint64_t dense = batch * 3 * 4;
    CHECK(whole.ops.multiplies == conv1 + conv2 + dense);
    CHECK(whole.ops.adds == conv1 + conv2 + dense);
    CHECK(whole.ops.shifts == 0);
    CHECK(whole.ops.sign_flips == 0);
}

TEST_CASE("quantization error bound on a shift_q dense layer") {
    Rng rng(31);
    NetworkModel model = build_network({LayerSpec::dense(10, 8)}, TensorShape{1, 1, 10}, 3);
    for (Eigen::Index i = 0; i < model.layers[0].state.float_weights.size(); ++i)
        model.layers[0].state.float_weights(i) =
            (u01(rng) < 0.5 ? -1.0 : 1.0) * std::exp2(uniform_real(rng, -15.0, 0.0));
    const Matrix master = model.layers[0].state.float_weights;
    Rng qrng(0);
    const Matrix effective = dequantize(quantize_q(master, 5, RoundingMode::Deterministic, qrng));
    for (Eigen::Index i = 0; i < master.size(); ++i) {
        const double factor = effective(i) / master(i);
        CHECK(factor >= std::pow(2.0, -0.5) * (1 - 1e-12));
        CHECK(factor <= std::pow(2.0, 0.5) * (1 + 1e-12));
    }
}

TEST_CASE("gradient check against central differences") {
    Rng rng(17);

    SUBCASE("two dense layers") {
        NetworkModel model = build_network(tiny_mlp(4, 5, 3), TensorShape{1, 1, 4}, 7);
        CHECK(model.parameter_count() <= 100);
        const Matrix x = random_batch(6, 4, rng);
        const std::vector<int> y{0, 1, 2, 0, 1, 2};
        check_gradients(model, x, y);
    }

    SUBCASE("small conv network") {
        std::vector<LayerSpec> arch{LayerSpec::conv2d(1, 2, 2), LayerSpec::relu(),
                                    LayerSpec::maxpool2d(2, 2), LayerSpec::flatten(),
                                    LayerSpec::dense(2, 2)};
        NetworkModel model = build_network(arch, TensorShape{1, 4, 4}, 19);
        CHECK(model.parameter_count() <= 100);
        const Matrix x = random_batch(4, 16, rng);
        const std::vector<int> y{0, 1, 1, 0};
        check_gradients(model, x, y);
    }
}

TEST_CASE("straight-through estimator masks") {
    SUBCASE("weight clamped at p_max gets zero gradient") {
        NetworkModel model = build_network({LayerSpec::dense(2, 2)}, TensorShape{1, 1, 2}, 0);
        model.layers[0].state.float_weights << 4.0, 0.25,  // 4.0 rounds above p_max = 0
            -0.5, 0.125;
        model.layers[0].state.bias.setZero();
        model = convert_to_shift(std::move(model), 1, ShiftType::Q, 5, FixedPointFormat{8, 8},
                                 RoundingMode::Deterministic);
        Matrix x(1, 2);
        x << 1.0, 1.0;
        const GradientSet gs = backward(model, x, {0});
        CHECK(gs.layers[0].weight(0, 0) == 0.0);
        CHECK(gs.layers[0].weight(0, 1) != 0.0);
        CHECK(gs.layers[0].weight(1, 0) != 0.0);
    }

    SUBCASE("PS path: sign-zero weight gets zero raw-power gradient") {
        NetworkModel model = build_network({LayerSpec::dense(2, 2)}, TensorShape{1, 1, 2}, 0);
        model = convert_to_shift(std::move(model), 1, ShiftType::PS, 5, FixedPointFormat{8, 8},
                                 RoundingMode::Deterministic);
        model.layers[0].state.raw_signs << 0.3, 1.0,  // (0,0) rounds to sign 0
            1.0, -1.0;
        model.layers[0].state.raw_powers << -1.0, -2.0, -1.0, -3.0;
        Matrix x(1, 2);
        x << 1.0, 1.0;
        const GradientSet gs = backward(model, x, {0});
        CHECK(gs.layers[0].raw_powers(0, 0) == 0.0);
        CHECK(gs.layers[0].raw_powers(0, 1) != 0.0);
        // Sign gradients flow through 2^P regardless of the sign value.
        CHECK(gs.layers[0].raw_signs(0, 0) != 0.0);
    }

    SUBCASE("activation outside the fixed-point clamp blocks the gradient") {
        NetworkModel model =
            build_network({LayerSpec::dense(1, 1), LayerSpec::dense(1, 2)}, TensorShape{1, 1, 1},
                          0);
        model.layers[0].state.float_weights << 10.0;  // activation 10 > fmt(2,2) max = 1.75
        model.layers[0].state.bias.setZero();
        model.layers[1].state.float_weights << 0.5, -0.5;
        model.layers[1].state.bias.setZero();
        model = convert_to_shift(std::move(model), 2, ShiftType::Q, 5, FixedPointFormat{2, 2},
                                 RoundingMode::Deterministic);
        model.layers[0].state.mode = LayerMode::Float;  // only the second layer stays shift
        Matrix x(1, 1);
        x << 1.0;
        const GradientSet gs = backward(model, x, {0});
        CHECK(gs.layers[0].weight(0, 0) == 0.0);
    }
}

TEST_CASE("forward reports non-finite intermediates with layer index") {
    NetworkModel model = build_network(tiny_mlp(2, 3, 2), TensorShape{1, 1, 2}, 1);
    model.layers[0].state.float_weights.setConstant(1e308);
    Matrix x(1, 2);
    x << 1e10, 1e10;
    CHECK_THROWS_AS(forward(model, x), NumericError);
    try {
        forward(model, x);
    } catch (const NumericError& e) {
        CHECK(e.layer_index == 0);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(23);
    NetworkModel model = build_network(tiny_cnn(), TensorShape{1, 7, 7}, 77);
    model = convert_to_shift(std::move(model), 2, ShiftType::PS, 6, FixedPointFormat{5, 9},
                             RoundingMode::Stochastic);
    model.layers[0].state.raw_powers.array() += 0.125;
    model.layers[6].state.float_weights.array() *= 1.7;

    const std::string path =
        (std::filesystem::temp_directory_path() / "shiftopt_ckpt.json").string();
    save_model(model, path);
    NetworkModel loaded = load_model(path);
    CHECK(model_to_json(loaded) == model_to_json(model));
    CHECK(model_checkpoint_hash(loaded) == model_checkpoint_hash(model));

    const Matrix x = random_batch(2, 49, rng);
    CHECK(mat_eq(forward(model, x, true).logits, forward(loaded, x, true).logits));
    std::filesystem::remove(path);
}

TEST_CASE("deterministic rounding makes repeated forwards identical") {
    Rng rng(4);
    NetworkModel model = build_network(tiny_cnn(), TensorShape{1, 7, 7}, 5);
    model = convert_to_shift(std::move(model), 3, ShiftType::Q, 5, FixedPointFormat{8, 8},
                             RoundingMode::Deterministic);
    const Matrix x = random_batch(2, 49, rng);
    const Matrix l1 = forward(model, x).logits;
    const Matrix l2 = forward(model, x).logits;
    CHECK(mat_eq(l1, l2));
}
