#pragma once

// Power-of-two weight quantization: weights become sign * 2^power so a
// multiply turns into a bit shift plus a sign flip. Two flavors: the Q path
// quantizes float master weights on the fly, the PS path treats the raw
// power/sign values themselves as the trainable parameters. Also holds the
// fixed-point activation grid.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

#include "shiftopt/rng.hpp"

namespace shiftopt {

using Matrix = Eigen::MatrixXd;
using MatrixI = Eigen::MatrixXi;

enum class RoundingMode { Deterministic, Stochastic };

// Signed power-of-two representation of a weight matrix.
// Entry (i,j) dequantizes to signs(i,j) * 2^powers(i,j), exactly.
struct ShiftWeights {
    MatrixI signs;   // in {-1, 0, +1}
    MatrixI powers;  // clamped base-2 exponents

    Eigen::Index rows() const { return signs.rows(); }
    Eigen::Index cols() const { return signs.cols(); }

    bool operator==(const ShiftWeights& o) const {
        return signs == o.signs && powers == o.powers;
    }
};

// Fixed-point activation grid with I integer bits (sign included) and F
// fraction bits: representable values are multiples of 2^-F inside
// [-2^(I-1), 2^(I-1) - 2^-F].
struct FixedPointFormat {
    int integer_bits = 16;
    int fraction_bits = 16;

    void validate() const {
        if (integer_bits < 1 || integer_bits > 32 || fraction_bits < 1 || fraction_bits > 32)
            throw std::invalid_argument("FixedPointFormat: bits must lie in [1, 32]");
    }
    double min_value() const { return -std::ldexp(1.0, integer_bits - 1); }
    double max_value() const {
        return std::ldexp(1.0, integer_bits - 1) - std::ldexp(1.0, -fraction_bits);
    }
    bool operator==(const FixedPointFormat& o) const {
        return integer_bits == o.integer_bits && fraction_bits == o.fraction_bits;
    }
};

// Power clamp range for a weight-bit budget b: one sign bit plus b-1 power
// bits covering [-(2^(b-1) - 1) + offset, offset]. Normalized weights have
// magnitude <= 1, so the default offset 0 spends the whole range on
// nonpositive shifts.
inline int power_min(int weight_bits, int p_offset = 0) {
    return -((1 << (weight_bits - 1)) - 1) + p_offset;
}

inline int power_max(int /*weight_bits*/, int p_offset = 0) { return p_offset; }

// Nearest integer, ties to even. nearbyint honors the default FE_TONEAREST
// rounding environment, which is exactly round-half-to-even.
inline double round_half_even(double x) { return std::nearbyint(x); }

// round(x) under the given mode. Deterministic: nearest, ties to even.
// Stochastic: ceil(x) with probability frac(x) = x - floor(x), else floor(x);
// unbiased, E[round(x)] = x.
inline double round_value(double x, RoundingMode mode, Rng& rng) {
    if (mode == RoundingMode::Deterministic) return round_half_even(x);
    const double lo = std::floor(x);
    const double frac = x - lo;
    return (u01(rng) < frac) ? lo + 1.0 : lo;
}

namespace detail {

inline void check_weight_bits(int weight_bits) {
    if (weight_bits < 2 || weight_bits > 8)
        throw std::invalid_argument("weight_bits must lie in [2, 8]");
}

template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (!std::isfinite(static_cast<double>(m(i, j)))) {
                std::ostringstream oss;
                oss << what << ": non-finite entry at (" << i << ", " << j << ")";
                throw std::invalid_argument(oss.str());
            }
}

inline int clamp_power(double p, int p_lo, int p_hi) {
    if (p < p_lo) return p_lo;
    if (p > p_hi) return p_hi;
    return static_cast<int>(p);
}

// Single Q-path entry. in_range reports whether the rounded power landed
// inside the clamp range before clamping (the straight-through gradient mask;
// zero weights count as out of range).
inline void quantize_q_entry(double v, int p_lo, int p_hi, RoundingMode mode, Rng& rng, int& sign,
                             int& power, bool& in_range) {
    if (v == 0.0) {
        sign = 0;
        power = p_lo;
        in_range = false;
        return;
    }
    sign = v > 0.0 ? 1 : -1;
    const double p = round_value(std::log2(std::abs(v)), mode, rng);
    in_range = (p >= p_lo && p <= p_hi);
    power = clamp_power(p, p_lo, p_hi);
}

// Single PS-path entry; in_range masks the power clamp as above.
inline void quantize_ps_entry(double raw_power, double raw_sign, int p_lo, int p_hi,
                              RoundingMode mode, Rng& rng, int& sign, int& power, bool& in_range) {
    const double p = round_value(raw_power, mode, rng);
    in_range = (p >= p_lo && p <= p_hi);
    power = clamp_power(p, p_lo, p_hi);
    const double s = round_value(raw_sign, mode, rng);
    sign = s > 0.0 ? 1 : (s < 0.0 ? -1 : 0);
}

}  // namespace detail

// DeepShift-Q: signs = sign(w), powers = round(log2|w|) clamped to the
// weight-bit range. Zero weights get sign 0 and the minimum power.
template <typename Derived>
ShiftWeights quantize_q(const Eigen::MatrixBase<Derived>& w, int weight_bits, RoundingMode mode,
                        Rng& rng, int p_offset = 0) {
    detail::check_weight_bits(weight_bits);
    detail::check_finite(w, "quantize_q");
    const int p_lo = power_min(weight_bits, p_offset);
    const int p_hi = power_max(weight_bits, p_offset);

    ShiftWeights sw;
    sw.signs.resize(w.rows(), w.cols());
    sw.powers.resize(w.rows(), w.cols());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            bool in_range;
            detail::quantize_q_entry(static_cast<double>(w(i, j)), p_lo, p_hi, mode, rng,
                                     sw.signs(i, j), sw.powers(i, j), in_range);
        }
    }
    return sw;
}

// DeepShift-PS: powers = round(raw_powers) clamped; signs = sign(round(raw_signs)),
// taking values -1, 0, or +1.
template <typename DerivedP, typename DerivedS>
ShiftWeights quantize_ps(const Eigen::MatrixBase<DerivedP>& raw_powers,
                         const Eigen::MatrixBase<DerivedS>& raw_signs, int weight_bits,
                         RoundingMode mode, Rng& rng, int p_offset = 0) {
    detail::check_weight_bits(weight_bits);
    if (raw_powers.rows() != raw_signs.rows() || raw_powers.cols() != raw_signs.cols()) {
        std::ostringstream oss;
        oss << "quantize_ps: shape mismatch, powers " << raw_powers.rows() << "x"
            << raw_powers.cols() << " vs signs " << raw_signs.rows() << "x" << raw_signs.cols();
        throw std::invalid_argument(oss.str());
    }
    detail::check_finite(raw_powers, "quantize_ps powers");
    detail::check_finite(raw_signs, "quantize_ps signs");
    const int p_lo = power_min(weight_bits, p_offset);
    const int p_hi = power_max(weight_bits, p_offset);

    ShiftWeights sw;
    sw.signs.resize(raw_powers.rows(), raw_powers.cols());
    sw.powers.resize(raw_powers.rows(), raw_powers.cols());
    for (Eigen::Index j = 0; j < raw_powers.cols(); ++j) {
        for (Eigen::Index i = 0; i < raw_powers.rows(); ++i) {
            bool in_range;
            detail::quantize_ps_entry(static_cast<double>(raw_powers(i, j)),
                                      static_cast<double>(raw_signs(i, j)), p_lo, p_hi, mode, rng,
                                      sw.signs(i, j), sw.powers(i, j), in_range);
        }
    }
    return sw;
}

// sign * 2^power; exact in binary floating point. Sign 0 forces 0 regardless
// of the stored power.
inline Matrix dequantize(const ShiftWeights& sw) {
    Matrix out(sw.rows(), sw.cols());
    for (Eigen::Index j = 0; j < sw.cols(); ++j)
        for (Eigen::Index i = 0; i < sw.rows(); ++i)
            out(i, j) = static_cast<double>(sw.signs(i, j)) * std::ldexp(1.0, sw.powers(i, j));
    return out;
}

// Clamp to the format's range, then round to the nearest multiple of 2^-F
// (ties to even). Multiplication by 2^F is exact, so the result sits on the
// grid whenever the grid is representable in double.
inline double quantize_activation_value(double x, const FixedPointFormat& fmt) {
    const double lo = fmt.min_value();
    const double hi = fmt.max_value();
    const double clamped = x < lo ? lo : (x > hi ? hi : x);
    const double scale = std::ldexp(1.0, fmt.fraction_bits);
    return round_half_even(clamped * scale) / scale;
}

template <typename Derived>
Matrix quantize_activation(const Eigen::MatrixBase<Derived>& x, const FixedPointFormat& fmt) {
    fmt.validate();
    return x.derived().unaryExpr(
        [&fmt](double v) { return quantize_activation_value(v, fmt); });
}

}  // namespace shiftopt
