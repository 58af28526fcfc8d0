#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Training engine: soft Dice loss, Adam with decoupled weight decay,
// polynomial LR schedule, flip/shift/zoom augmentation, a deterministic
// mini-batch loop that updates only the trainable side of a parameter
// partition, and output averaging over the last four epoch snapshots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "hyps/autodiff.hpp"
#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/model.hpp"
#include "hyps/rng.hpp"
#include "hyps/volume.hpp"

namespace hyps {

constexpr double kDiceEps = 1e-5;

// Soft Dice term for one sample: (2*sum(Y*Yhat) + eps) / (sum(Y) + sum(Yhat) + eps).
inline int dice_term(Tape& t, int pred, int target, double eps = kDiceEps) {
    require_same_shape(t.value(pred), t.value(target), "dice_term");
    int num = t.add_const(t.scale(t.sum_all(t.hadamard(pred, target)), 2.0), eps);
    int den = t.add_const(t.add(t.sum_all(pred), t.sum_all(target)), eps);
    return t.div(num, den);
}

// L = -(1/N) * sum of per-sample terms; range [-1, 0].
inline int dice_loss_node(Tape& t, const std::vector<int>& preds, const std::vector<int>& targets,
                          double eps = kDiceEps) {
    if (preds.empty() || preds.size() != targets.size())
        throw UsageError("dice_loss: batch must be non-empty with matching pred/target counts");
    std::vector<int> terms;
    terms.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        terms.push_back(dice_term(t, preds[i], targets[i], eps));
    int total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = t.add(total, terms[i]);
    return t.scale(total, -1.0 / static_cast<double>(preds.size()));
}

// Tape-free evaluation of the same formula.
inline double dice_loss(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets,
                        double eps = kDiceEps) {
    if (preds.empty() || preds.size() != targets.size())
        throw UsageError("dice_loss: batch must be non-empty with matching pred/target counts");
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        require_same_shape(preds[i], targets[i], "dice_loss");
        const double inter = sum_all(hadamard(preds[i], targets[i]));
        total += (2.0 * inter + eps) / (sum_all(preds[i]) + sum_all(targets[i]) + eps);
    }
    return -total / static_cast<double>(preds.size());
}

inline double poly_lr(std::size_t iter, std::size_t total_iters, double lr0) {
    if (total_iters == 0 || iter > total_iters)
        throw UsageError("poly_lr: need 0 <= iter <= total_iters with total_iters > 0");
    return lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total_iters), 0.9);
}

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;
    std::vector<Matrix> m, v;  // indexed like the parameter table
};

// One Adam step with decoupled weight decay over the trainable indices
// of the partition. grads is indexed like the param table; an empty
// gradient matrix counts as zero.
inline void adam_step(const std::vector<ParamEntry>& params, const ParamPartition& partition,
                      const std::vector<Matrix>& grads, AdamState& st, double lr,
                      double weight_decay) {
    if (grads.size() != params.size())
        throw UsageError("adam_step: gradient table size mismatch");
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t idx : partition.trainable) {
        Matrix& p = *params[idx].value;
        Matrix& m = st.m[idx];
        Matrix& v = st.v[idx];
        if (m.size() == 0) {
            m = Matrix(p.rows(), p.cols());
            v = Matrix(p.rows(), p.cols());
        }
        const bool has_grad = grads[idx].size() > 0;
        if (has_grad && !grads[idx].same_shape(p))
            throw ShapeError("adam_step: gradient shape mismatch for " + params[idx].name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = has_grad ? grads[idx].data()[i] : 0.0;
            m.data()[i] = st.beta1 * m.data()[i] + (1.0 - st.beta1) * g;
            v.data()[i] = st.beta2 * v.data()[i] + (1.0 - st.beta2) * g * g;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            p.data()[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
            p.data()[i] -= lr * weight_decay * p.data()[i];
        }
    }
}

// ---- augmentation ----------------------------------------------------

struct AugmentParams {
    bool flip[3] = {false, false, false};  // x, y, z
    double intensity_shift = 0.0;
    double zoom = 1.0;
};

// Draw order is fixed: three flips, then shift, then zoom.
inline AugmentParams draw_augment(Rng& rng) {
    AugmentParams p;
    for (int a = 0; a < 3; ++a) p.flip[a] = rng.flip(0.5);
    p.intensity_shift = rng.uniform(-0.1, 0.1);
    p.zoom = rng.uniform(0.9, 1.1);
    return p;
}

namespace detail {

inline double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Trilinear sample with edge clamping.
inline double sample_trilinear(const Volume& v, double x, double y, double z) {
    x = clampd(x, 0.0, static_cast<double>(v.nx() - 1));
    y = clampd(y, 0.0, static_cast<double>(v.ny() - 1));
    z = clampd(z, 0.0, static_cast<double>(v.nz() - 1));
    const std::size_t x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y),
                      z0 = static_cast<std::size_t>(z);
    const std::size_t x1 = std::min(x0 + 1, v.nx() - 1), y1 = std::min(y0 + 1, v.ny() - 1),
                      z1 = std::min(z0 + 1, v.nz() - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0),
                 fz = z - static_cast<double>(z0);
    auto lerp = [](double a, double b, double f) { return a + (b - a) * f; };
    const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), fx);
    const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), fx);
    const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), fx);
    const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), fx);
    return lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
}

inline std::size_t nn_coord(double c, std::size_t n) {
    const long long r = std::llround(clampd(c, 0.0, static_cast<double>(n - 1)));
    return static_cast<std::size_t>(r);
}

} // namespace detail

// Flips (image and label identically), one global intensity shift on
// the image, then a zoom about the volume center resampled back to the
// original grid (trilinear image, nearest-neighbor label, edge clamp).
inline void apply_augment(Volume& image, BinaryMask& label, const AugmentParams& p) {
    if (image.nx() != label.nx() || image.ny() != label.ny() || image.nz() != label.nz())
        throw ShapeError("apply_augment: image " + image.shape_str() + " vs label " +
                         label.shape_str());
    const std::size_t nx = image.nx(), ny = image.ny(), nz = image.nz();
    auto src = [&](std::size_t i, std::size_t n, bool f) { return f ? n - 1 - i : i; };
    if (p.flip[0] || p.flip[1] || p.flip[2]) {
        Volume fi(nx, ny, nz, image.spacing());
        BinaryMask fl(nx, ny, nz, label.spacing());
        for (std::size_t z = 0; z < nz; ++z)
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) {
                    const std::size_t sx = src(x, nx, p.flip[0]);
                    const std::size_t sy = src(y, ny, p.flip[1]);
                    const std::size_t sz = src(z, nz, p.flip[2]);
                    fi.at(x, y, z) = image.at(sx, sy, sz);
                    fl.at(x, y, z) = label.at(sx, sy, sz);
                }
        image = std::move(fi);
        label = std::move(fl);
    }
    if (p.intensity_shift != 0.0)
        for (std::size_t i = 0; i < image.size(); ++i) image.data()[i] += p.intensity_shift;
    if (p.zoom != 1.0) {
        const double cx = (static_cast<double>(nx) - 1.0) / 2.0;
        const double cy = (static_cast<double>(ny) - 1.0) / 2.0;
        const double cz = (static_cast<double>(nz) - 1.0) / 2.0;
        Volume zi(nx, ny, nz, image.spacing());
        BinaryMask zl(nx, ny, nz, label.spacing());
        for (std::size_t z = 0; z < nz; ++z)
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) {
                    const double sx = cx + (static_cast<double>(x) - cx) / p.zoom;
                    const double sy = cy + (static_cast<double>(y) - cy) / p.zoom;
                    const double sz = cz + (static_cast<double>(z) - cz) / p.zoom;
                    zi.at(x, y, z) = detail::sample_trilinear(image, sx, sy, sz);
                    zl.at(x, y, z) = label.at(detail::nn_coord(sx, nx), detail::nn_coord(sy, ny),
                                              detail::nn_coord(sz, nz));
                }
        image = std::move(zi);
        label = std::move(zl);
    }
}

inline void augment(Volume& image, BinaryMask& label, Rng& rng) {
    apply_augment(image, label, draw_augment(rng));
}

// ---- training loop ---------------------------------------------------

struct Sample {
    Volume image;
    BinaryMask label;
};

struct TrainConfig {
    std::size_t batch_size = 4;
    double lr0 = 1e-3;
    std::size_t total_iters = 0;  // 0: epochs * batches-per-epoch
    double weight_decay = 1e-5;
    std::size_t epochs = 0;
    std::uint64_t seed = 42;
    bool augment = true;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (!(lr0 > 0.0)) throw ConfigError("train config: lr0 must be positive");
        if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
    }
};

struct EpochLog {
    std::size_t epoch;  // 1-based
    double lr;          // schedule value at the epoch's first iteration
    double loss;        // mean batch loss over the epoch
};

struct TrainResult {
    std::vector<EpochLog> history;
    std::vector<ModelState> last_snapshots;  // up to the last 4 epoch-end states
};

inline TrainResult train(ToySegModel& model, const std::vector<Sample>& dataset,
                         const ParamPartition& partition, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    if (cfg.epochs == 0) return result;
    if (dataset.empty()) throw UsageError("train: dataset is empty");

    const std::size_t patch = model.config().patch;
    const std::size_t n = dataset.size();
    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_iters =
        cfg.total_iters > 0 ? cfg.total_iters : cfg.epochs * batches_per_epoch;

    Rng rng(cfg.seed);
    AdamState adam;
    std::deque<ModelState> snaps;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t iter = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        const double epoch_lr = poly_lr(std::min(iter, total_iters - 1), total_iters, cfg.lr0);
        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - b0);
            Tape tape;
            TapeBinding bind{&tape, {}};
            std::vector<int> preds, targets;
            preds.reserve(bsz);
            targets.reserve(bsz);
            for (std::size_t k = 0; k < bsz; ++k) {
                const Sample& s = dataset[order[b0 + k]];
                Volume img = s.image;
                BinaryMask lab = s.label;
                if (cfg.augment) augment(img, lab, rng);
                std::size_t x0 = 0, y0 = 0, z0 = 0;
                if (img.nx() > patch || img.ny() > patch || img.nz() > patch) {
                    x0 = rng.below(img.nx() - patch + 1);
                    y0 = rng.below(img.ny() - patch + 1);
                    z0 = rng.below(img.nz() - patch + 1);
                }
                preds.push_back(model.forward(tape, bind, extract_patch_input(img, x0, y0, z0, patch)));
                targets.push_back(tape.leaf(extract_patch_target(lab, x0, y0, z0, patch)));
            }
            const int loss = dice_loss_node(tape, preds, targets);
            const double loss_val = tape.value(loss)(0, 0);
            if (!std::isfinite(loss_val))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            epoch_loss += loss_val;
            tape.backward(loss);

            std::vector<ParamEntry> table = model.params();
            std::vector<Matrix> grads(table.size());
            for (std::size_t pi : partition.trainable) {
                const Matrix* p = table[pi].value;
                if (bind.bound(p) && tape.has_grad(bind.id(p))) grads[pi] = tape.grad(bind.id(p));
            }
            const double lr =
                poly_lr(std::min(iter, total_iters - 1), total_iters, cfg.lr0);
            adam_step(table, partition, grads, adam, lr, cfg.weight_decay);
            ++iter;
        }
        result.history.push_back(
            {epoch, epoch_lr, epoch_loss / static_cast<double>(batches_per_epoch)});
        snaps.push_back(model.get_state());
        if (snaps.size() > 4) snaps.pop_front();
    }
    result.last_snapshots.assign(snaps.begin(), snaps.end());
    return result;
}

// Voxelwise mean of the four snapshot models' predicted probability
// volumes; the model's current state is restored afterwards.
inline Volume checkpoint_output_average(ToySegModel& model, const std::vector<ModelState>& snaps,
                                        const Volume& vol) {
    if (snaps.size() != 4)
        throw UsageError("checkpoint_output_average: need exactly 4 snapshots, got " +
                         std::to_string(snaps.size()));
    const ModelState saved = model.get_state();
    Volume acc;
    for (const ModelState& s : snaps) {
        model.set_state(s);
        Volume p = model.infer_volume(vol);
        if (acc.size() == 0) {
            acc = std::move(p);
        } else {
            for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += p.data()[i];
        }
    }
    model.set_state(saved);
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] /= 4.0;
    return acc;
}

} // namespace hyps
