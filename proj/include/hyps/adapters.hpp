#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// The adapter family for parameter-efficient fine-tuning of a linear
// layer y = Wx + b:
//
//   LoRA     y = Wx + b + s_a * A_up  * relu(A_down * x)
//   SeqLoRA  y = Wx + b + s_b * B_up  * relu(B_down * (Wx + b))
//   CPS      both increments at once
//   PiSSA    y = (W_res + W_pri_up * W_pri_down) x + b, split from the SVD
//   HyPS     PiSSA base with the SeqLoRA branch applied to its output
//
// plus FullTuning / LinearProbe which carry no branches. Up-projections
// start at zero so every variant is the identity adaptation at init;
// down-projections are Kaiming-initialized.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/rng.hpp"
#include "hyps/svd.hpp"

namespace hyps {

enum class AdapterVariant { FullTuning, LinearProbe, LoRA, SeqLoRA, PiSSA, CPS, HyPS };

inline const char* variant_name(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::FullTuning: return "full";
        case AdapterVariant::LinearProbe: return "linear-probe";
        case AdapterVariant::LoRA: return "lora";
        case AdapterVariant::SeqLoRA: return "seqlora";
        case AdapterVariant::PiSSA: return "pissa";
        case AdapterVariant::CPS: return "cps";
        case AdapterVariant::HyPS: return "hyps";
    }
    return "?";
}

inline std::optional<AdapterVariant> variant_from_name(const std::string& s) {
    if (s == "full") return AdapterVariant::FullTuning;
    if (s == "linear-probe") return AdapterVariant::LinearProbe;
    if (s == "lora") return AdapterVariant::LoRA;
    if (s == "seqlora") return AdapterVariant::SeqLoRA;
    if (s == "pissa" || s == "pissa-only") return AdapterVariant::PiSSA;
    if (s == "cps") return AdapterVariant::CPS;
    if (s == "hyps") return AdapterVariant::HyPS;
    return std::nullopt;
}

// rank_a / scale_a drive the parallel (LoRA or PiSSA) part, rank_b /
// scale_b the sequential part. Variants that lack a part ignore its rank.
struct AdapterSpec {
    AdapterVariant variant = AdapterVariant::FullTuning;
    std::size_t rank_a = 0;
    std::size_t rank_b = 0;
    double scale_a = 1.0;
    double scale_b = 1.0;

    static AdapterSpec full() { return {AdapterVariant::FullTuning, 0, 0, 1.0, 1.0}; }
    static AdapterSpec linear_probe() { return {AdapterVariant::LinearProbe, 0, 0, 1.0, 1.0}; }
    static AdapterSpec lora(std::size_t r, double s = 1.0) { return {AdapterVariant::LoRA, r, 0, s, 1.0}; }
    static AdapterSpec seqlora(std::size_t r, double s = 1.0) { return {AdapterVariant::SeqLoRA, 0, r, 1.0, s}; }
    static AdapterSpec pissa(std::size_t r) { return {AdapterVariant::PiSSA, r, 0, 1.0, 1.0}; }
    static AdapterSpec cps(std::size_t r, double sa = 1.0, double sb = 1.0) { return {AdapterVariant::CPS, r, r, sa, sb}; }
    static AdapterSpec hyps(std::size_t r, double s = 1.0) { return {AdapterVariant::HyPS, r, r, 1.0, s}; }

    bool uses_parallel() const {
        return variant == AdapterVariant::LoRA || variant == AdapterVariant::CPS;
    }
    bool uses_sequential() const {
        return variant == AdapterVariant::SeqLoRA || variant == AdapterVariant::CPS ||
               variant == AdapterVariant::HyPS;
    }
    bool uses_split() const {
        return variant == AdapterVariant::PiSSA || variant == AdapterVariant::HyPS;
    }
};

struct LinearLayer {
    Matrix w;    // m x n
    Matrix b;    // m x 1
    bool frozen = true;

    LinearLayer() = default;
    LinearLayer(Matrix weight, Matrix bias) : w(std::move(weight)), b(std::move(bias)) {
        if (b.cols() != 1 || b.rows() != w.rows())
            throw ShapeError("linear layer: bias must be " + std::to_string(w.rows()) +
                             "x1, got " + b.shape_str());
    }
};

struct LoRABranch {
    Matrix a_up;    // m x r_a, zero at construction
    Matrix a_down;  // r_a x n, Kaiming
    double scale = 1.0;
};

struct SeqLoRABranch {
    Matrix b_up;    // m x r_b, zero at construction
    Matrix b_down;  // r_b x m, Kaiming
    double scale = 1.0;
};

// Top-r SVD component of W, kept factored and trainable; the residual
// holds everything else and stays frozen. Reconstruction
// w_res + w_pri_up * w_pri_down == W holds exactly at construction.
struct PiSSASplit {
    Matrix w_pri_up;    // m x r = U_r * sqrt(S_r)
    Matrix w_pri_down;  // r x n = sqrt(S_r) * V_r^T
    Matrix w_res;       // m x n, frozen
};

inline PiSSASplit make_pissa_split(const Matrix& w, std::size_t rank) {
    const std::size_t k = std::min(w.rows(), w.cols());
    if (rank < 1 || rank > k)
        throw ConfigError("pissa split: rank " + std::to_string(rank) +
                          " out of range for layer " + w.shape_str());
    SvdResult dec = svd(w);
    PiSSASplit split;
    split.w_pri_up = Matrix(w.rows(), rank);
    split.w_pri_down = Matrix(rank, w.cols());
    for (std::size_t j = 0; j < rank; ++j) {
        const double root = std::sqrt(dec.sigma[j]);
        for (std::size_t i = 0; i < w.rows(); ++i) split.w_pri_up(i, j) = dec.u(i, j) * root;
        for (std::size_t i = 0; i < w.cols(); ++i) split.w_pri_down(j, i) = root * dec.v(i, j);
    }
    split.w_res = w - matmul(split.w_pri_up, split.w_pri_down);
    return split;
}

inline Matrix collapse_pissa(const PiSSASplit& split) {
    return split.w_res + matmul(split.w_pri_up, split.w_pri_down);
}

// A frozen linear layer plus whatever branches the variant calls for.
// Under PiSSA/HyPS the base w is replaced by the split and is not read
// during forward.
struct AdaptedLinear {
    LinearLayer base;
    AdapterSpec spec;
    std::optional<LoRABranch> lora;
    std::optional<SeqLoRABranch> seq;
    std::optional<PiSSASplit> pissa;
};

inline AdaptedLinear init_adapted(LinearLayer layer, const AdapterSpec& spec, Rng& rng) {
    const std::size_t m = layer.w.rows(), n = layer.w.cols();
    const std::size_t k = std::min(m, n);
    auto check_rank = [&](std::size_t r, const char* which) {
        if (r < 1 || r > k)
            throw ConfigError(std::string("adapter rank ") + which + "=" + std::to_string(r) +
                              " out of range [1, " + std::to_string(k) + "] for layer " +
                              layer.w.shape_str());
    };

    AdaptedLinear out;
    out.spec = spec;
    out.base = std::move(layer);
    out.base.frozen = !(spec.variant == AdapterVariant::FullTuning ||
                        spec.variant == AdapterVariant::LinearProbe);

    if (spec.uses_parallel()) {
        check_rank(spec.rank_a, "r_a");
        out.lora = LoRABranch{Matrix(m, spec.rank_a), kaiming_init(spec.rank_a, n, rng), spec.scale_a};
    }
    if (spec.uses_split()) {
        check_rank(spec.rank_a, "r");
        out.pissa = make_pissa_split(out.base.w, spec.rank_a);
    }
    if (spec.uses_sequential()) {
        check_rank(spec.rank_b, "r_b");
        out.seq = SeqLoRABranch{Matrix(m, spec.rank_b), kaiming_init(spec.rank_b, m, rng), spec.scale_b};
    }
    return out;
}

namespace detail {

// y(:,j) += b for every column j.
inline Matrix add_bias_cols(Matrix y, const Matrix& b) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double* row = y.row_ptr(i);
        const double bi = b(i, 0);
        for (std::size_t j = 0; j < y.cols(); ++j) row[j] += bi;
    }
    return y;
}

} // namespace detail

// Applies the variant's rule column-wise: x is n x k, result is m x k.
inline Matrix forward(const AdaptedLinear& l, const Matrix& x) {
    const std::size_t n = l.base.w.cols();
    if (x.rows() != n)
        throw ShapeError("adapted forward: input must have " + std::to_string(n) +
                         " rows, got " + x.shape_str());

    Matrix h;
    if (l.spec.uses_split()) {
        const PiSSASplit& s = *l.pissa;
        h = matmul(s.w_res, x) + matmul(s.w_pri_up, matmul(s.w_pri_down, x));
        h = detail::add_bias_cols(std::move(h), l.base.b);
    } else {
        h = detail::add_bias_cols(matmul(l.base.w, x), l.base.b);
    }

    Matrix out = h;
    if (l.lora) {
        const LoRABranch& br = *l.lora;
        out = out + br.scale * matmul(br.a_up, relu(matmul(br.a_down, x)));
    }
    if (l.seq) {
        const SeqLoRABranch& br = *l.seq;
        out = out + br.scale * matmul(br.b_up, relu(matmul(br.b_down, h)));
    }
    return out;
}

// Wx + b through the frozen base only (or through the split for
// PiSSA/HyPS, which replaces the base).
inline Matrix base_forward(const AdaptedLinear& l, const Matrix& x) {
    if (l.spec.uses_split()) {
        const PiSSASplit& s = *l.pissa;
        Matrix h = matmul(s.w_res, x) + matmul(s.w_pri_up, matmul(s.w_pri_down, x));
        return detail::add_bias_cols(std::move(h), l.base.b);
    }
    return detail::add_bias_cols(matmul(l.base.w, x), l.base.b);
}

// Closed-form trainable-parameter count for one m x n layer.
inline long long trainable_params_layer(std::size_t m, std::size_t n, const AdapterSpec& spec) {
    const long long mm = static_cast<long long>(m), nn = static_cast<long long>(n);
    const long long ra = static_cast<long long>(spec.rank_a), rb = static_cast<long long>(spec.rank_b);
    switch (spec.variant) {
        case AdapterVariant::FullTuning:
        case AdapterVariant::LinearProbe: return mm * nn + mm;
        case AdapterVariant::LoRA: return ra * (mm + nn);
        case AdapterVariant::SeqLoRA: return 2 * rb * mm;
        case AdapterVariant::PiSSA: return ra * (mm + nn);
        case AdapterVariant::CPS: return ra * (mm + nn) + 2 * rb * mm;
        case AdapterVariant::HyPS: return ra * (mm + nn) + 2 * rb * mm;
    }
    return 0;
}

inline long long trainable_params(const std::vector<std::pair<std::size_t, std::size_t>>& inventory,
                                  const AdapterSpec& spec) {
    long long total = 0;
    for (const auto& [m, n] : inventory) total += trainable_params_layer(m, n, spec);
    return total;
}

} // namespace hyps
