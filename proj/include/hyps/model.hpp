#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// A miniature Swin-style 3D encoder-decoder for binary segmentation,
// exposing the six adapter attachment points per transformer block
// (Q, K, V, O, MLP1, MLP2). Patch embedding turns 2x2x2 voxel groups
// into d-dim tokens; blocks alternate plain and shifted window
// attention (cyclic shift, no boundary masking); the decoder upsamples
// back to voxel resolution with per-voxel linears, a skip connection
// from the embedding, and a sigmoid output.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hyps/adapters.hpp"
#include "hyps/autodiff.hpp"
#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/rng.hpp"
#include "hyps/volume.hpp"

namespace hyps {

struct ToyModelConfig {
    std::size_t patch = 16;      // input patch side, voxels
    std::size_t embed_dim = 16;  // token dim d
    std::vector<std::size_t> depths = {2};
    std::size_t heads = 2;
    std::size_t window = 4;      // window side, tokens
    std::size_t mlp_ratio = 4;

    std::size_t grid() const { return patch / 2; }

    void validate() const {
        if (patch < 4 || patch % 2 != 0)
            throw ConfigError("model config: patch must be even and >= 4, got " +
                              std::to_string(patch));
        if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0)
            throw ConfigError("model config: embed_dim " + std::to_string(embed_dim) +
                              " must be divisible by heads " + std::to_string(heads));
        if (depths.size() != 1 || depths[0] == 0)
            throw ConfigError("model config: exactly one stage with >= 1 blocks is supported");
        if (window == 0 || grid() % window != 0)
            throw ConfigError("model config: window " + std::to_string(window) +
                              " must divide the token grid side " + std::to_string(grid()));
        if (mlp_ratio == 0) throw ConfigError("model config: mlp_ratio must be positive");
    }
};

enum class Role { Q, K, V, O, MLP1, MLP2 };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::Q: return "q";
        case Role::K: return "k";
        case Role::V: return "v";
        case Role::O: return "o";
        case Role::MLP1: return "mlp1";
        case Role::MLP2: return "mlp2";
    }
    return "?";
}

struct RegistryEntry {
    std::string name;
    Role role;
    std::size_t m, n;
};

struct ParamEntry {
    std::string name;
    Matrix* value;
    bool trainable;
};

struct ParamPartition {
    std::vector<std::size_t> trainable;  // indices into the param table
    std::vector<std::size_t> frozen;
};

using ModelState = std::vector<Matrix>;

// Forward through an AdaptedLinear on the tape; mirrors adapters::forward.
inline int adapted_forward(Tape& t, TapeBinding& bind, const AdaptedLinear& l, int x) {
    int h;
    if (l.spec.uses_split()) {
        const PiSSASplit& s = *l.pissa;
        int low = t.matmul(bind.bind(&s.w_pri_up), t.matmul(bind.bind(&s.w_pri_down), x));
        h = t.add_bias_cols(t.add(t.matmul(bind.bind(&s.w_res), x), low), bind.bind(&l.base.b));
    } else {
        h = t.add_bias_cols(t.matmul(bind.bind(&l.base.w), x), bind.bind(&l.base.b));
    }
    int out = h;
    if (l.lora) {
        int br = t.matmul(bind.bind(&l.lora->a_up),
                          t.relu(t.matmul(bind.bind(&l.lora->a_down), x)));
        out = t.add(out, t.scale(br, l.lora->scale));
    }
    if (l.seq) {
        int br = t.matmul(bind.bind(&l.seq->b_up),
                          t.relu(t.matmul(bind.bind(&l.seq->b_down), h)));
        out = t.add(out, t.scale(br, l.seq->scale));
    }
    return out;
}

// 8 x N token-input matrix for one patch: column = token (2^3 voxel
// block, x-fastest token order), row = voxel within the block.
inline Matrix extract_patch_input(const Volume& v, std::size_t x0, std::size_t y0,
                                  std::size_t z0, std::size_t patch) {
    if (x0 + patch > v.nx() || y0 + patch > v.ny() || z0 + patch > v.nz())
        throw ShapeError("extract_patch_input: patch exceeds volume " + v.shape_str());
    const std::size_t t = patch / 2;
    Matrix out(8, t * t * t);
    for (std::size_t tz = 0; tz < t; ++tz)
        for (std::size_t ty = 0; ty < t; ++ty)
            for (std::size_t tx = 0; tx < t; ++tx) {
                const std::size_t col = (tz * t + ty) * t + tx;
                for (std::size_t dz = 0; dz < 2; ++dz)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            out((dz * 2 + dy) * 2 + dx, col) =
                                v.at(x0 + 2 * tx + dx, y0 + 2 * ty + dy, z0 + 2 * tz + dz);
            }
    return out;
}

// 1 x patch^3 row of 0/1 targets, voxel order x-fastest.
inline Matrix extract_patch_target(const BinaryMask& m, std::size_t x0, std::size_t y0,
                                   std::size_t z0, std::size_t patch) {
    if (x0 + patch > m.nx() || y0 + patch > m.ny() || z0 + patch > m.nz())
        throw ShapeError("extract_patch_target: patch exceeds volume " + m.shape_str());
    Matrix out(1, patch * patch * patch);
    std::size_t i = 0;
    for (std::size_t z = 0; z < patch; ++z)
        for (std::size_t y = 0; y < patch; ++y)
            for (std::size_t x = 0; x < patch; ++x)
                out(0, i++) = m.at(x0 + x, y0 + y, z0 + z) ? 1.0 : 0.0;
    return out;
}

struct LayerNormParams {
    Matrix gamma;  // d x 1
    Matrix beta;   // d x 1
};

class ToySegModel {
public:
    struct Block {
        LayerNormParams ln1, ln2;
        AdaptedLinear q, k, v, o, mlp1, mlp2;
        bool shifted = false;
    };

    ToySegModel(ToyModelConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = cfg_.embed_dim;
        const std::size_t dm = d * cfg_.mlp_ratio;
        patch_embed_ = LinearLayer{kaiming_init(d, 8, rng), Matrix(d, 1)};
        blocks_.resize(cfg_.depths[0]);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            Block& b = blocks_[i];
            b.ln1 = {Matrix(d, 1, 1.0), Matrix(d, 1)};
            b.ln2 = {Matrix(d, 1, 1.0), Matrix(d, 1)};
            b.q.base = LinearLayer{kaiming_init(d, d, rng), Matrix(d, 1)};
            b.k.base = LinearLayer{kaiming_init(d, d, rng), Matrix(d, 1)};
            b.v.base = LinearLayer{kaiming_init(d, d, rng), Matrix(d, 1)};
            b.o.base = LinearLayer{kaiming_init(d, d, rng), Matrix(d, 1)};
            b.mlp1.base = LinearLayer{kaiming_init(dm, d, rng), Matrix(dm, 1)};
            b.mlp2.base = LinearLayer{kaiming_init(d, dm, rng), Matrix(d, 1)};
            b.shifted = (i % 2 == 1);
        }
        decoder_d1_ = LinearLayer{kaiming_init(d, 2 * d, rng), Matrix(d, 1)};
        decoder_d2_ = LinearLayer{kaiming_init(kDecoderMid, d, rng), Matrix(kDecoderMid, 1)};
        decoder_d3_ = LinearLayer{kaiming_init(1, kDecoderMid, rng), Matrix(1, 1)};
        spec_ = AdapterSpec::full();
        build_indices();
    }

    const ToyModelConfig& config() const { return cfg_; }
    const AdapterSpec& spec() const { return spec_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t token_count() const { return cfg_.grid() * cfg_.grid() * cfg_.grid(); }
    std::size_t voxel_count() const { return cfg_.patch * cfg_.patch * cfg_.patch; }

    std::vector<RegistryEntry> registry() const {
        std::vector<RegistryEntry> out;
        const std::size_t d = cfg_.embed_dim, dm = d * cfg_.mlp_ratio;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "block" + std::to_string(i) + ".";
            out.push_back({p + "q", Role::Q, d, d});
            out.push_back({p + "k", Role::K, d, d});
            out.push_back({p + "v", Role::V, d, d});
            out.push_back({p + "o", Role::O, d, d});
            out.push_back({p + "mlp1", Role::MLP1, dm, d});
            out.push_back({p + "mlp2", Role::MLP2, d, dm});
        }
        return out;
    }

    std::vector<std::pair<std::size_t, std::size_t>> registry_shapes() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const RegistryEntry& e : registry()) out.emplace_back(e.m, e.n);
        return out;
    }

    // Wraps every registry layer with the requested adapter; encoder layer
    // norms and the patch embedding freeze under PEFT variants, the decoder
    // stays trainable. Re-attachment over trained branches is not supported.
    ParamPartition attach_adapters(const AdapterSpec& spec, Rng& rng) {
        for (Block& b : blocks_)
            for (AdaptedLinear* l : {&b.q, &b.k, &b.v, &b.o, &b.mlp1, &b.mlp2})
                if (l->lora || l->seq || l->pissa)
                    throw UsageError("attach_adapters: adapters already attached");
        std::size_t li = 0;
        const std::vector<RegistryEntry> reg = registry();
        for (Block& b : blocks_)
            for (AdaptedLinear* l : {&b.q, &b.k, &b.v, &b.o, &b.mlp1, &b.mlp2}) {
                try {
                    *l = init_adapted(LinearLayer{l->base.w, l->base.b}, spec, rng);
                } catch (const ConfigError& e) {
                    throw ConfigError(reg[li].name + ": " + e.what());
                }
                ++li;
            }
        spec_ = spec;
        return partition();
    }

    // Every matrix in the model, in a fixed construction order, with its
    // trainability under the active adapter spec.
    std::vector<ParamEntry> params() {
        std::vector<ParamEntry> out;
        const bool full = spec_.variant == AdapterVariant::FullTuning;
        const bool base_trainable = full || spec_.variant == AdapterVariant::LinearProbe;
        out.push_back({"patch_embed.w", &patch_embed_.w, full});
        out.push_back({"patch_embed.b", &patch_embed_.b, full});
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            Block& b = blocks_[i];
            const std::string p = "block" + std::to_string(i) + ".";
            out.push_back({p + "ln1.gamma", &b.ln1.gamma, full});
            out.push_back({p + "ln1.beta", &b.ln1.beta, full});
            const char* names[6] = {"q", "k", "v", "o", "mlp1", "mlp2"};
            AdaptedLinear* layers[6] = {&b.q, &b.k, &b.v, &b.o, &b.mlp1, &b.mlp2};
            for (int j = 0; j < 6; ++j) {
                const std::string lp = p + names[j] + ".";
                AdaptedLinear* l = layers[j];
                out.push_back({lp + "base.w", &l->base.w, base_trainable});
                out.push_back({lp + "base.b", &l->base.b, base_trainable});
                if (l->lora) {
                    out.push_back({lp + "lora.a_up", &l->lora->a_up, true});
                    out.push_back({lp + "lora.a_down", &l->lora->a_down, true});
                }
                if (l->pissa) {
                    out.push_back({lp + "pissa.w_pri_up", &l->pissa->w_pri_up, true});
                    out.push_back({lp + "pissa.w_pri_down", &l->pissa->w_pri_down, true});
                    out.push_back({lp + "pissa.w_res", &l->pissa->w_res, false});
                }
                if (l->seq) {
                    out.push_back({lp + "seq.b_up", &l->seq->b_up, true});
                    out.push_back({lp + "seq.b_down", &l->seq->b_down, true});
                }
            }
            out.push_back({p + "ln2.gamma", &b.ln2.gamma, full});
            out.push_back({p + "ln2.beta", &b.ln2.beta, full});
        }
        out.push_back({"decoder.d1.w", &decoder_d1_.w, true});
        out.push_back({"decoder.d1.b", &decoder_d1_.b, true});
        out.push_back({"decoder.d2.w", &decoder_d2_.w, true});
        out.push_back({"decoder.d2.b", &decoder_d2_.b, true});
        out.push_back({"decoder.d3.w", &decoder_d3_.w, true});
        out.push_back({"decoder.d3.b", &decoder_d3_.b, true});
        return out;
    }

    ParamPartition partition() {
        ParamPartition p;
        std::vector<ParamEntry> table = params();
        for (std::size_t i = 0; i < table.size(); ++i)
            (table[i].trainable ? p.trainable : p.frozen).push_back(i);
        return p;
    }

    ModelState get_state() {
        ModelState s;
        for (const ParamEntry& e : params()) s.push_back(*e.value);
        return s;
    }

    void set_state(const ModelState& s) {
        std::vector<ParamEntry> table = params();
        if (s.size() != table.size())
            throw UsageError("set_state: expected " + std::to_string(table.size()) +
                             " tensors, got " + std::to_string(s.size()));
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (!table[i].value->same_shape(s[i]))
                throw ShapeError("set_state: shape mismatch for " + table[i].name);
            *table[i].value = s[i];
        }
    }

    // One transformer block on the tape: pre-norm attention and MLP
    // sublayers with residual connections. x is a d x N token node.
    int block_forward(Tape& t, TapeBinding& bind, const Block& blk, int x) {
        int a = t.layer_norm_cols(x, bind.bind(&blk.ln1.gamma), bind.bind(&blk.ln1.beta));
        x = t.add(x, window_attention(t, bind, blk, a));
        int m = t.layer_norm_cols(x, bind.bind(&blk.ln2.gamma), bind.bind(&blk.ln2.beta));
        m = adapted_forward(t, bind, blk.mlp2, t.relu(adapted_forward(t, bind, blk.mlp1, m)));
        return t.add(x, m);
    }

    int window_attention(Tape& t, TapeBinding& bind, const Block& blk, int x) {
        const std::size_t d = cfg_.embed_dim, nh = cfg_.heads, dh = d / nh;
        const int layout = blk.shifted ? 1 : 0;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<int> outs;
        outs.reserve(win_src_[layout].size());
        for (const std::vector<std::size_t>& idx : win_src_[layout]) {
            int xw = t.gather_cols(x, idx);
            int q = adapted_forward(t, bind, blk.q, xw);
            int k = adapted_forward(t, bind, blk.k, xw);
            int v = adapted_forward(t, bind, blk.v, xw);
            std::vector<int> heads;
            heads.reserve(nh);
            for (std::size_t h = 0; h < nh; ++h) {
                int qh = t.slice_rows(q, h * dh, (h + 1) * dh);
                int kh = t.slice_rows(k, h * dh, (h + 1) * dh);
                int vh = t.slice_rows(v, h * dh, (h + 1) * dh);
                int scores = t.scale(t.matmul(t.transpose(qh), kh), inv_sqrt);
                int att = t.softmax_rows(scores);  // rows index queries
                heads.push_back(t.matmul(vh, t.transpose(att)));
            }
            outs.push_back(adapted_forward(t, bind, blk.o, t.concat_rows(heads)));
        }
        return t.gather_cols(t.concat_cols(outs), unperm_[layout]);
    }

    // Full forward for one patch; embed_input is 8 x N. Returns the
    // sigmoid probability node, 1 x patch^3.
    int forward(Tape& t, TapeBinding& bind, const Matrix& embed_input) {
        if (embed_input.rows() != 8 || embed_input.cols() != token_count())
            throw ShapeError("model forward: embed input must be 8x" +
                             std::to_string(token_count()) + ", got " + embed_input.shape_str());
        int x = t.leaf(embed_input);
        int tok = t.add_bias_cols(t.matmul(bind.bind(&patch_embed_.w), x),
                                  bind.bind(&patch_embed_.b));
        const int skip = tok;
        for (const Block& b : blocks_) tok = block_forward(t, bind, b, tok);
        int y = t.concat_rows({tok, skip});
        y = t.relu(t.add_bias_cols(t.matmul(bind.bind(&decoder_d1_.w), y),
                                   bind.bind(&decoder_d1_.b)));
        y = t.gather_cols(y, upsample_idx_);
        y = t.relu(t.add_bias_cols(t.matmul(bind.bind(&decoder_d2_.w), y),
                                   bind.bind(&decoder_d2_.b)));
        y = t.add_bias_cols(t.matmul(bind.bind(&decoder_d3_.w), y), bind.bind(&decoder_d3_.b));
        return t.sigmoid(y);
    }

    Matrix predict_patch(const Matrix& embed_input) {
        Tape t;
        TapeBinding bind{&t, {}};
        return t.value(forward(t, bind, embed_input));
    }

    // Non-overlapping sliding window over an arbitrary volume: zero-pad
    // to a patch multiple, tile, stitch, crop.
    Volume infer_volume(const Volume& vol) {
        const std::size_t p = cfg_.patch;
        if (vol.nx() < p || vol.ny() < p || vol.nz() < p)
            throw ShapeError("infer_volume: volume " + vol.shape_str() +
                             " smaller than patch " + std::to_string(p));
        const std::size_t px = (vol.nx() + p - 1) / p * p;
        const std::size_t py = (vol.ny() + p - 1) / p * p;
        const std::size_t pz = (vol.nz() + p - 1) / p * p;
        Volume padded(px, py, pz, vol.spacing());
        for (std::size_t z = 0; z < vol.nz(); ++z)
            for (std::size_t y = 0; y < vol.ny(); ++y)
                for (std::size_t x = 0; x < vol.nx(); ++x)
                    padded.at(x, y, z) = vol.at(x, y, z);
        Volume out_pad(px, py, pz, vol.spacing());
        for (std::size_t z0 = 0; z0 < pz; z0 += p)
            for (std::size_t y0 = 0; y0 < py; y0 += p)
                for (std::size_t x0 = 0; x0 < px; x0 += p) {
                    const Matrix prob = predict_patch(extract_patch_input(padded, x0, y0, z0, p));
                    std::size_t i = 0;
                    for (std::size_t z = 0; z < p; ++z)
                        for (std::size_t y = 0; y < p; ++y)
                            for (std::size_t x = 0; x < p; ++x)
                                out_pad.at(x0 + x, y0 + y, z0 + z) = prob(0, i++);
                }
        if (px == vol.nx() && py == vol.ny() && pz == vol.nz()) return out_pad;
        Volume out(vol.nx(), vol.ny(), vol.nz(), vol.spacing());
        for (std::size_t z = 0; z < vol.nz(); ++z)
            for (std::size_t y = 0; y < vol.ny(); ++y)
                for (std::size_t x = 0; x < vol.nx(); ++x)
                    out.at(x, y, z) = out_pad.at(x, y, z);
        return out;
    }

    BinaryMask predict_mask(const Volume& vol, double threshold = 0.5) {
        return to_mask(infer_volume(vol), threshold);
    }

    static constexpr std::size_t kDecoderMid = 8;

private:
    // Window-gather indices for the unshifted and shifted layouts.
    // win_src_[s][w] lists, per window, the source token columns (cyclic
    // shift folded in); unperm_[s][t] locates token t in the
    // window-major concatenation so one gather restores token order.
    void build_indices() {
        const std::size_t tg = cfg_.grid(), w = cfg_.window, nw = tg / w;
        const std::size_t wvol = w * w * w;
        auto token_index = [tg](std::size_t x, std::size_t y, std::size_t z) {
            return (z * tg + y) * tg + x;
        };
        for (int layout = 0; layout < 2; ++layout) {
            const std::size_t s = layout == 0 ? 0 : w / 2;
            auto& wins = win_src_[layout];
            wins.assign(nw * nw * nw, {});
            std::vector<std::size_t> pos_of(tg * tg * tg);
            for (std::size_t wz = 0; wz < nw; ++wz)
                for (std::size_t wy = 0; wy < nw; ++wy)
                    for (std::size_t wx = 0; wx < nw; ++wx) {
                        const std::size_t wid = (wz * nw + wy) * nw + wx;
                        wins[wid].reserve(wvol);
                        for (std::size_t lz = 0; lz < w; ++lz)
                            for (std::size_t ly = 0; ly < w; ++ly)
                                for (std::size_t lx = 0; lx < w; ++lx) {
                                    const std::size_t px = wx * w + lx;
                                    const std::size_t py = wy * w + ly;
                                    const std::size_t pz = wz * w + lz;
                                    wins[wid].push_back(token_index(
                                        (px + s) % tg, (py + s) % tg, (pz + s) % tg));
                                    pos_of[token_index(px, py, pz)] =
                                        wid * wvol + (lz * w + ly) * w + lx;
                                }
                    }
            auto& unperm = unperm_[layout];
            unperm.resize(tg * tg * tg);
            for (std::size_t z = 0; z < tg; ++z)
                for (std::size_t y = 0; y < tg; ++y)
                    for (std::size_t x = 0; x < tg; ++x)
                        unperm[token_index(x, y, z)] = pos_of[token_index(
                            (x + tg - s) % tg, (y + tg - s) % tg, (z + tg - s) % tg)];
        }
        const std::size_t p = cfg_.patch;
        upsample_idx_.resize(p * p * p);
        std::size_t i = 0;
        for (std::size_t z = 0; z < p; ++z)
            for (std::size_t y = 0; y < p; ++y)
                for (std::size_t x = 0; x < p; ++x)
                    upsample_idx_[i++] = token_index(x / 2, y / 2, z / 2);
    }

    ToyModelConfig cfg_;
    AdapterSpec spec_;
    LinearLayer patch_embed_;
    std::vector<Block> blocks_;
    LinearLayer decoder_d1_, decoder_d2_, decoder_d3_;
    std::vector<std::vector<std::size_t>> win_src_[2];
    std::vector<std::size_t> unperm_[2];
    std::vector<std::size_t> upsample_idx_;
};

} // namespace hyps
