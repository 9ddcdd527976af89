#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shiftopt/shift_quant.hpp"

using namespace shiftopt;

namespace {

Matrix scalar_mat(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

// v is zero or an exact power of two: frexp yields a significand of exactly
// 0.5 for powers of two.
bool is_zero_or_pow2(double v) {
    if (v == 0.0) return true;
    int exp;
    const double m = std::frexp(std::abs(v), &exp);
    return m == 0.5;
}

}  // namespace

TEST_CASE("round_value deterministic: nearest with ties to even") {
    Rng rng(1);
    CHECK(round_value(2.0, RoundingMode::Deterministic, rng) == 2.0);
    CHECK(round_value(2.5, RoundingMode::Deterministic, rng) == 2.0);
    CHECK(round_value(3.5, RoundingMode::Deterministic, rng) == 4.0);
    CHECK(round_value(-2.5, RoundingMode::Deterministic, rng) == -2.0);
    CHECK(round_value(-0.5, RoundingMode::Deterministic, rng) == -0.0);
    CHECK(round_value(1.3, RoundingMode::Deterministic, rng) == 1.0);
    CHECK(round_value(1.7, RoundingMode::Deterministic, rng) == 2.0);
}

TEST_CASE("round_value stochastic: integer inputs fixed, mean unbiased") {
    Rng rng(7);
    CHECK(round_value(2.0, RoundingMode::Stochastic, rng) == 2.0);
    CHECK(round_value(-3.0, RoundingMode::Stochastic, rng) == -3.0);

    // Empirical mean over 1e5 draws within |x|*1% + 0.01 of x.
    for (const double x : {0.1, 1.3, -2.7}) {
        const int n = 100000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += round_value(x, RoundingMode::Stochastic, rng);
        const double mean = sum / n;
        CHECK(std::abs(mean - x) <= std::abs(x) * 0.01 + 0.01);
    }

    // x = 1.3 rounds up with probability 0.3.
    int ups = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (round_value(1.3, RoundingMode::Stochastic, rng) == 2.0) ++ups;
    CHECK(std::abs(ups / static_cast<double>(n) - 0.3) < 0.01);
}

TEST_CASE("quantize_q example values") {
    Rng rng(1);

    SUBCASE("power of two passes through exactly") {
        const ShiftWeights sw = quantize_q(scalar_mat(0.25), 5, RoundingMode::Deterministic, rng);
        CHECK(sw.signs(0, 0) == 1);
        CHECK(sw.powers(0, 0) == -2);
        CHECK(dequantize(sw)(0, 0) == 0.25);
    }

    SUBCASE("round(log2 3) = 2 with a power offset admitting positive shifts") {
        const ShiftWeights sw =
            quantize_q(scalar_mat(-3.0), 5, RoundingMode::Deterministic, rng, /*p_offset=*/2);
        CHECK(sw.signs(0, 0) == -1);
        CHECK(sw.powers(0, 0) == 2);
        CHECK(dequantize(sw)(0, 0) == -4.0);
    }

    SUBCASE("default offset saturates the same weight at 2^0") {
        const ShiftWeights sw = quantize_q(scalar_mat(-3.0), 5, RoundingMode::Deterministic, rng);
        CHECK(sw.signs(0, 0) == -1);
        CHECK(sw.powers(0, 0) == 0);
        CHECK(dequantize(sw)(0, 0) == -1.0);
    }

    SUBCASE("zero weight: sign 0, minimum power, dequantizes to zero") {
        const ShiftWeights sw = quantize_q(scalar_mat(0.0), 5, RoundingMode::Deterministic, rng);
        CHECK(sw.signs(0, 0) == 0);
        CHECK(sw.powers(0, 0) == power_min(5));
        CHECK(sw.powers(0, 0) == -15);
        CHECK(dequantize(sw)(0, 0) == 0.0);
    }

    SUBCASE("non-finite input names the offending index") {
        Matrix m(2, 2);
        m << 1.0, 2.0, 3.0, std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH_AS(quantize_q(m, 5, RoundingMode::Deterministic, rng),
                             doctest::Contains("(1, 1)"), std::invalid_argument);
    }
}

TEST_CASE("quantize_ps example values") {
    Rng rng(1);

    SUBCASE("rounds powers and signs") {
        const ShiftWeights sw = quantize_ps(scalar_mat(-1.2), scalar_mat(0.9), 5,
                                            RoundingMode::Deterministic, rng);
        CHECK(sw.powers(0, 0) == -1);
        CHECK(sw.signs(0, 0) == 1);
        CHECK(dequantize(sw)(0, 0) == 0.5);
    }

    SUBCASE("sign rounding to zero kills the weight") {
        const ShiftWeights sw = quantize_ps(scalar_mat(-1.0), scalar_mat(0.4), 5,
                                            RoundingMode::Deterministic, rng);
        CHECK(sw.signs(0, 0) == 0);
        CHECK(dequantize(sw)(0, 0) == 0.0);
    }

    SUBCASE("tie rounds to even (3.5 -> 4, offset covers it)") {
        const ShiftWeights sw = quantize_ps(scalar_mat(3.5), scalar_mat(1.0), 5,
                                            RoundingMode::Deterministic, rng, /*p_offset=*/4);
        CHECK(sw.powers(0, 0) == 4);
    }

    SUBCASE("shape mismatch rejected") {
        Matrix p(1, 2), s(2, 1);
        p.setZero();
        s.setZero();
        CHECK_THROWS_AS(quantize_ps(p, s, 5, RoundingMode::Deterministic, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("dequantize basics") {
    ShiftWeights sw;
    sw.signs.resize(1, 2);
    sw.powers.resize(1, 2);
    sw.signs << 1, -1;
    sw.powers << 0, -3;
    const Matrix m = dequantize(sw);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == -0.125);
}

TEST_CASE("quantization idempotence on the shift lattice") {
    Rng rng(99);
    for (int bits = 2; bits <= 8; ++bits) {
        const int p_lo = power_min(bits);
        ShiftWeights sw;
        sw.signs.resize(8, 8);
        sw.powers.resize(8, 8);
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                int sign = static_cast<int>(uniform_int(rng, -1, 1));
                int power = static_cast<int>(uniform_int(rng, p_lo, power_max(bits)));
                if (sign == 0) power = p_lo;  // canonical zero representation
                sw.signs(i, j) = sign;
                sw.powers(i, j) = power;
            }
        }
        Rng qrng(0);
        const ShiftWeights back =
            quantize_q(dequantize(sw), bits, RoundingMode::Deterministic, qrng);
        CHECK(back == sw);
    }
}

TEST_CASE("power-of-two closure and clamp respect over random weights") {
    Rng rng(123);
    for (int bits = 2; bits <= 8; ++bits) {
        const int p_lo = power_min(bits);
        const int p_hi = power_max(bits);
        Matrix w(40, 25);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            // Heavy-tailed draw: includes values far outside the clamp range.
            const double mag = std::exp(uniform_real(rng, -40.0, 40.0) * 0.693);
            w(i) = (u01(rng) < 0.5 ? -1.0 : 1.0) * mag;
        }
        w(0, 0) = 0.0;
        w(1, 1) = 1e300;
        w(2, 2) = -1e-300;

        for (const RoundingMode mode : {RoundingMode::Deterministic, RoundingMode::Stochastic}) {
            const ShiftWeights sw = quantize_q(w, bits, mode, rng);
            const Matrix deq = dequantize(sw);
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                CHECK(is_zero_or_pow2(deq(i)));
                CHECK(sw.powers(i) >= p_lo);
                CHECK(sw.powers(i) <= p_hi);
            }
            CHECK(deq(0, 0) == 0.0);
            CHECK(std::abs(deq(1, 1)) == 1.0);  // saturates at 2^p_max
        }
    }
}

TEST_CASE("nearest-power factor bound for in-range weights") {
    Rng rng(7);
    const double lo_factor = std::pow(2.0, -0.5) * (1.0 - 1e-12);
    const double hi_factor = std::pow(2.0, 0.5) * (1.0 + 1e-12);
    for (int bits : {2, 5, 8}) {
        Matrix w(50, 40);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double p = uniform_real(rng, power_min(bits), power_max(bits));
            w(i) = (u01(rng) < 0.5 ? -1.0 : 1.0) * std::exp2(p);
        }
        const ShiftWeights sw = quantize_q(w, bits, RoundingMode::Deterministic, rng);
        const Matrix deq = dequantize(sw);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double factor = deq(i) / w(i);
            CHECK(factor >= lo_factor);
            CHECK(factor <= hi_factor);
        }
    }
}

TEST_CASE("sign zero forces zero regardless of power") {
    ShiftWeights sw;
    sw.signs = MatrixI::Zero(1, 1);
    sw.powers = MatrixI::Constant(1, 1, 7);
    CHECK(dequantize(sw)(0, 0) == 0.0);
}

TEST_CASE("quantize_activation examples and grid invariant") {
    Rng rng(5);
    const FixedPointFormat f44{4, 4};

    const FixedPointFormat f42{4, 2};
    CHECK(quantize_activation(scalar_mat(0.5), f44)(0, 0) == 0.5);
    CHECK(quantize_activation(scalar_mat(100.0), f44)(0, 0) == 7.9375);
    CHECK(quantize_activation(scalar_mat(0.3), f42)(0, 0) == 0.25);
    CHECK(quantize_activation(scalar_mat(-100.0), f44)(0, 0) == -8.0);

    // Output times 2^F is integral and within the clamp bounds.
    for (int trial = 0; trial < 50; ++trial) {
        FixedPointFormat fmt{static_cast<int>(uniform_int(rng, 1, 16)),
                             static_cast<int>(uniform_int(rng, 1, 16))};
        Matrix x(7, 9);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = uniform_real(rng, -300.0, 300.0);
        const Matrix q = quantize_activation(x, fmt);
        const double scale = std::exp2(fmt.fraction_bits);
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            const double scaled = q(i) * scale;
            CHECK(scaled == std::nearbyint(scaled));
            CHECK(q(i) >= fmt.min_value());
            CHECK(q(i) <= fmt.max_value());
        }
    }
}

TEST_CASE("fixed point format validation") {
    const FixedPointFormat bad_int{0, 4};
    const FixedPointFormat bad_frac{4, 33};
    CHECK_THROWS_AS(bad_int.validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad_frac.validate(), std::invalid_argument);
    FixedPointFormat{1, 1}.validate();
    FixedPointFormat{32, 32}.validate();
}
