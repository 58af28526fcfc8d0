#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hyps/model.hpp"
#include "hyps/rng.hpp"

using hyps::BinaryMask;
using hyps::Matrix;
using hyps::ToyModelConfig;
using hyps::ToySegModel;
using hyps::Volume;
using Catch::Matchers::ContainsSubstring;

namespace {

ToyModelConfig small_config() {
    ToyModelConfig cfg;
    cfg.patch = 8;       // token grid 4
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.window = 2;      // eight windows, shift 1 on odd blocks
    cfg.mlp_ratio = 2;
    cfg.depths = {2};
    return cfg;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, hyps::Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

Volume random_volume(std::size_t side, hyps::Rng& rng) {
    Volume v(side, side, side);
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(0.0, 1.0);
    return v;
}

// ---- Naive reference forward pass ----
// Re-derives the whole computation with explicit loops and cyclic rolls,
// sharing only the per-layer adapter rule with the library.

Matrix ref_linear(const Matrix& w, const Matrix& b, const Matrix& x) {
    Matrix y = hyps::matmul(w, x);
    for (std::size_t j = 0; j < y.cols(); ++j)
        for (std::size_t i = 0; i < y.rows(); ++i) y(i, j) += b(i, 0);
    return y;
}

Matrix ref_layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta) {
    Matrix y(x.rows(), x.cols());
    const double eps = 1e-5;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean /= static_cast<double>(x.rows());
        double var = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= static_cast<double>(x.rows());
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < x.rows(); ++i)
            y(i, j) = gamma(i, 0) * (x(i, j) - mean) * inv + beta(i, 0);
    }
    return y;
}

Matrix ref_softmax_rows(const Matrix& s) {
    Matrix y(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double mx = s(i, 0);
        for (std::size_t j = 1; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) sum += std::exp(s(i, j) - mx);
        for (std::size_t j = 0; j < s.cols(); ++j) y(i, j) = std::exp(s(i, j) - mx) / sum;
    }
    return y;
}

// Rolls token columns so position p picks up the token at p + s (mod grid).
Matrix ref_roll(const Matrix& x, std::size_t tg, std::size_t s) {
    Matrix y(x.rows(), x.cols());
    auto tok = [tg](std::size_t cx, std::size_t cy, std::size_t cz) {
        return (cz * tg + cy) * tg + cx;
    };
    for (std::size_t z = 0; z < tg; ++z)
        for (std::size_t y_ = 0; y_ < tg; ++y_)
            for (std::size_t x_ = 0; x_ < tg; ++x_) {
                const std::size_t dst = tok(x_, y_, z);
                const std::size_t src = tok((x_ + s) % tg, (y_ + s) % tg, (z + s) % tg);
                for (std::size_t r = 0; r < x.rows(); ++r) y(r, dst) = x(r, src);
            }
    return y;
}

Matrix ref_attention(const ToySegModel::Block& blk, const Matrix& x_in,
                     const ToyModelConfig& cfg) {
    const std::size_t tg = cfg.grid(), w = cfg.window, nw = tg / w;
    const std::size_t d = cfg.embed_dim, nh = cfg.heads, dh = d / nh;
    const std::size_t s = blk.shifted ? w / 2 : 0;

    Matrix x = ref_roll(x_in, tg, s);
    Matrix out(d, x.cols());
    auto tok = [tg](std::size_t cx, std::size_t cy, std::size_t cz) {
        return (cz * tg + cy) * tg + cx;
    };

    for (std::size_t wz = 0; wz < nw; ++wz)
        for (std::size_t wy = 0; wy < nw; ++wy)
            for (std::size_t wx = 0; wx < nw; ++wx) {
                // Gather this window's tokens from the rolled map.
                std::vector<std::size_t> cols;
                for (std::size_t lz = 0; lz < w; ++lz)
                    for (std::size_t ly = 0; ly < w; ++ly)
                        for (std::size_t lx = 0; lx < w; ++lx)
                            cols.push_back(tok(wx * w + lx, wy * w + ly, wz * w + lz));
                Matrix xw(d, cols.size());
                for (std::size_t c = 0; c < cols.size(); ++c)
                    for (std::size_t r = 0; r < d; ++r) xw(r, c) = x(r, cols[c]);

                Matrix q = hyps::forward(blk.q, xw);
                Matrix k = hyps::forward(blk.k, xw);
                Matrix v = hyps::forward(blk.v, xw);
                Matrix merged(d, cols.size());
                for (std::size_t h = 0; h < nh; ++h) {
                    Matrix qh(dh, cols.size()), kh(dh, cols.size()), vh(dh, cols.size());
                    for (std::size_t r = 0; r < dh; ++r)
                        for (std::size_t c = 0; c < cols.size(); ++c) {
                            qh(r, c) = q(h * dh + r, c);
                            kh(r, c) = k(h * dh + r, c);
                            vh(r, c) = v(h * dh + r, c);
                        }
                    Matrix scores = (1.0 / std::sqrt(static_cast<double>(dh))) *
                                    hyps::matmul(hyps::transpose(qh), kh);
                    Matrix att = ref_softmax_rows(scores);
                    Matrix oh = hyps::matmul(vh, hyps::transpose(att));
                    for (std::size_t r = 0; r < dh; ++r)
                        for (std::size_t c = 0; c < cols.size(); ++c)
                            merged(h * dh + r, c) = oh(r, c);
                }
                Matrix proj = hyps::forward(blk.o, merged);
                for (std::size_t c = 0; c < cols.size(); ++c)
                    for (std::size_t r = 0; r < d; ++r) out(r, cols[c]) = proj(r, c);
            }

    // Undo the roll: token t was processed at position t - s.
    return ref_roll(out, tg, (tg - s) % tg);
}

Matrix ref_forward(ToySegModel& model, const Matrix& embed_input) {
    const ToyModelConfig& cfg = model.config();

    std::map<std::string, Matrix> named;
    for (const hyps::ParamEntry& e : model.params()) named[e.name] = *e.value;

    Matrix tok = ref_linear(named.at("patch_embed.w"), named.at("patch_embed.b"), embed_input);
    const Matrix skip = tok;

    for (const ToySegModel::Block& blk : model.blocks()) {
        Matrix a = ref_layer_norm(tok, blk.ln1.gamma, blk.ln1.beta);
        tok = tok + ref_attention(blk, a, cfg);
        Matrix m = ref_layer_norm(tok, blk.ln2.gamma, blk.ln2.beta);
        m = hyps::forward(blk.mlp2, hyps::relu(hyps::forward(blk.mlp1, m)));
        tok = tok + m;
    }

    Matrix y(2 * cfg.embed_dim, tok.cols());
    for (std::size_t j = 0; j < tok.cols(); ++j) {
        for (std::size_t i = 0; i < cfg.embed_dim; ++i) y(i, j) = tok(i, j);
        for (std::size_t i = 0; i < cfg.embed_dim; ++i)
            y(cfg.embed_dim + i, j) = skip(i, j);
    }
    y = hyps::relu(ref_linear(named.at("decoder.d1.w"), named.at("decoder.d1.b"), y));

    // Nearest-neighbour doubling: voxel (x, y, z) reads token (x/2, y/2, z/2).
    const std::size_t p = cfg.patch, tg = cfg.grid();
    Matrix up(y.rows(), p * p * p);
    std::size_t i = 0;
    for (std::size_t z = 0; z < p; ++z)
        for (std::size_t yy = 0; yy < p; ++yy)
            for (std::size_t x = 0; x < p; ++x, ++i) {
                const std::size_t t = ((z / 2) * tg + yy / 2) * tg + x / 2;
                for (std::size_t r = 0; r < y.rows(); ++r) up(r, i) = y(r, t);
            }

    up = hyps::relu(ref_linear(named.at("decoder.d2.w"), named.at("decoder.d2.b"), up));
    up = ref_linear(named.at("decoder.d3.w"), named.at("decoder.d3.b"), up);
    for (std::size_t k = 0; k < up.size(); ++k) {
        const double v = up.data()[k];
        up.data()[k] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return up;
}

} // namespace

TEST_CASE("config validation") {
    ToyModelConfig bad = small_config();
    bad.patch = 7;
    REQUIRE_THROWS_AS(bad.validate(), hyps::ConfigError);
    bad = small_config();
    bad.embed_dim = 9;  // not divisible by heads
    REQUIRE_THROWS_AS(bad.validate(), hyps::ConfigError);
    bad = small_config();
    bad.window = 3;  // does not divide the grid
    REQUIRE_THROWS_AS(bad.validate(), hyps::ConfigError);
    bad = small_config();
    bad.depths = {};
    REQUIRE_THROWS_AS(bad.validate(), hyps::ConfigError);
    REQUIRE_NOTHROW(ToyModelConfig{}.validate());
}

TEST_CASE("registry lists attachable layers in order") {
    hyps::Rng rng(1);
    ToySegModel model(small_config(), rng);
    std::vector<hyps::RegistryEntry> reg = model.registry();
    REQUIRE(reg.size() == 12);  // 6 per block, 2 blocks
    REQUIRE(reg[0].name == "block0.q");
    REQUIRE(reg[3].name == "block0.o");
    REQUIRE(reg[4].name == "block0.mlp1");
    REQUIRE(reg[4].m == 16);
    REQUIRE(reg[4].n == 8);
    REQUIRE(reg[5].name == "block0.mlp2");
    REQUIRE(reg[5].m == 8);
    REQUIRE(reg[5].n == 16);
    REQUIRE(reg[11].name == "block1.mlp2");
    for (int i = 0; i < 4; ++i) {
        REQUIRE(reg[i].m == 8);
        REQUIRE(reg[i].n == 8);
    }
    REQUIRE(model.token_count() == 64);
    REQUIRE(model.voxel_count() == 512);
    REQUIRE_FALSE(model.blocks()[0].shifted);
    REQUIRE(model.blocks()[1].shifted);
}

TEST_CASE("parameter table names and full-tuning trainability") {
    hyps::Rng rng(2);
    ToySegModel model(small_config(), rng);
    std::vector<hyps::ParamEntry> t = model.params();

    // 2 embed + 2 blocks x (4 norm + 12 linear) + 6 decoder.
    REQUIRE(t.size() == 40);
    REQUIRE(t[0].name == "patch_embed.w");
    REQUIRE(t[1].name == "patch_embed.b");
    REQUIRE(t[2].name == "block0.ln1.gamma");
    REQUIRE(t[4].name == "block0.q.base.w");
    REQUIRE(t.back().name == "decoder.d3.b");
    for (const hyps::ParamEntry& e : t) REQUIRE(e.trainable);

    hyps::ParamPartition part = model.partition();
    REQUIRE(part.trainable.size() == 40);
    REQUIRE(part.frozen.empty());
}

TEST_CASE("adapter attachment freezes the encoder") {
    hyps::Rng rng(3);
    ToySegModel model(small_config(), rng);
    hyps::ParamPartition part = model.attach_adapters(hyps::AdapterSpec::lora(2), rng);

    std::vector<hyps::ParamEntry> t = model.params();
    std::size_t branch = 0;
    for (const hyps::ParamEntry& e : t) {
        const bool is_branch = e.name.find(".lora.") != std::string::npos;
        const bool is_decoder = e.name.rfind("decoder.", 0) == 0;
        if (is_branch) ++branch;
        REQUIRE(e.trainable == (is_branch || is_decoder));
    }
    REQUIRE(branch == 24);  // a_up and a_down for 12 layers
    REQUIRE(part.trainable.size() + part.frozen.size() == t.size());
    for (std::size_t i : part.trainable) REQUIRE(t[i].trainable);
    for (std::size_t i : part.frozen) REQUIRE_FALSE(t[i].trainable);
}

TEST_CASE("attachment is one-shot and errors name the layer") {
    hyps::Rng rng(4);
    ToySegModel model(small_config(), rng);
    REQUIRE_THROWS_MATCHES(model.attach_adapters(hyps::AdapterSpec::lora(16), rng),
                           hyps::ConfigError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("block0.q")));

    ToySegModel ok(small_config(), rng);
    ok.attach_adapters(hyps::AdapterSpec::lora(2), rng);
    REQUIRE_THROWS_AS(ok.attach_adapters(hyps::AdapterSpec::lora(2), rng), hyps::UsageError);
}

TEST_CASE("patch input layout: one voxel, one matrix cell") {
    Volume v(8, 8, 8);
    v.at(5, 2, 6) = 1.0;  // token (2, 1, 3), offset (1, 0, 0)
    Matrix in = hyps::extract_patch_input(v, 0, 0, 0, 8);
    REQUIRE(in.rows() == 8);
    REQUIRE(in.cols() == 64);
    const std::size_t col = (3 * 4 + 1) * 4 + 2;
    const std::size_t row = (0 * 2 + 0) * 2 + 1;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 64; ++c)
            REQUIRE(in(r, c) == ((r == row && c == col) ? 1.0 : 0.0));

    REQUIRE_THROWS_AS(hyps::extract_patch_input(v, 1, 0, 0, 8), hyps::ShapeError);
}

TEST_CASE("patch target layout is x-fastest") {
    BinaryMask m(8, 8, 8);
    m.at(3, 1, 2) = 1;
    Matrix tgt = hyps::extract_patch_target(m, 0, 0, 0, 8);
    REQUIRE(tgt.rows() == 1);
    REQUIRE(tgt.cols() == 512);
    for (std::size_t i = 0; i < 512; ++i)
        REQUIRE(tgt(0, i) == (i == (2 * 8 + 1) * 8 + 3 ? 1.0 : 0.0));

    REQUIRE_THROWS_AS(hyps::extract_patch_target(m, 0, 2, 0, 8), hyps::ShapeError);
}

TEST_CASE("offset patches read the right region") {
    hyps::Rng rng(5);
    Volume v = random_volume(12, rng);
    Matrix shifted = hyps::extract_patch_input(v, 4, 2, 0, 8);
    REQUIRE(shifted(0, 0) == v.at(4, 2, 0));
    // Row 7 of column 0 is offset (1, 1, 1) of token (0, 0, 0).
    REQUIRE(shifted(7, 0) == v.at(5, 3, 1));
}

TEST_CASE("forward produces probabilities and validates shape") {
    hyps::Rng rng(6);
    ToySegModel model(small_config(), rng);
    Matrix in = hyps::extract_patch_input(random_volume(8, rng), 0, 0, 0, 8);
    Matrix out = model.predict_patch(in);
    REQUIRE(out.rows() == 1);
    REQUIRE(out.cols() == 512);
    for (std::size_t i = 0; i < out.size(); ++i) {
        REQUIRE(out.data()[i] > 0.0);
        REQUIRE(out.data()[i] < 1.0);
    }

    hyps::Tape t;
    hyps::TapeBinding bind{&t, {}};
    REQUIRE_THROWS_AS(model.forward(t, bind, Matrix(8, 63)), hyps::ShapeError);
    REQUIRE_THROWS_AS(model.forward(t, bind, Matrix(7, 64)), hyps::ShapeError);
}

TEST_CASE("forward matches the naive reference") {
    hyps::Rng rng(1234);
    ToySegModel model(small_config(), rng);
    Matrix in = hyps::extract_patch_input(random_volume(8, rng), 0, 0, 0, 8);
    REQUIRE(hyps::max_abs_diff(model.predict_patch(in), ref_forward(model, in)) <= 1e-12);
}

TEST_CASE("forward matches the reference with trained adapter branches") {
    for (auto make : {+[](std::size_t r) { return hyps::AdapterSpec::lora(r, 0.8); },
                      +[](std::size_t r) { return hyps::AdapterSpec::seqlora(r, 0.6); },
                      +[](std::size_t r) { return hyps::AdapterSpec::pissa(r); },
                      +[](std::size_t r) { return hyps::AdapterSpec::cps(r, 0.9, 0.3); },
                      +[](std::size_t r) { return hyps::AdapterSpec::hyps(r, 0.5); }}) {
        hyps::Rng rng(4321);
        ToySegModel model(small_config(), rng);
        model.attach_adapters(make(2), rng);

        // Pretend training happened: give every up-projection real values.
        for (ToySegModel::Block& blk : model.blocks())
            for (hyps::AdaptedLinear* l : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.mlp1, &blk.mlp2}) {
                if (l->lora) l->lora->a_up = random_matrix(l->lora->a_up.rows(),
                                                          l->lora->a_up.cols(), rng);
                if (l->seq) l->seq->b_up = random_matrix(l->seq->b_up.rows(),
                                                         l->seq->b_up.cols(), rng);
                if (l->pissa)
                    l->pissa->w_pri_up =
                        l->pissa->w_pri_up +
                        0.1 * random_matrix(l->pissa->w_pri_up.rows(),
                                            l->pissa->w_pri_up.cols(), rng);
            }

        hyps::Rng in_rng(77);
        Matrix in = hyps::extract_patch_input(random_volume(8, in_rng), 0, 0, 0, 8);
        INFO("variant " << hyps::variant_name(model.spec().variant));
        REQUIRE(hyps::max_abs_diff(model.predict_patch(in), ref_forward(model, in)) <= 1e-12);
    }
}

TEST_CASE("attachment preserves predictions at initialization") {
    hyps::Rng in_rng(88);
    Matrix in = hyps::extract_patch_input(random_volume(8, in_rng), 0, 0, 0, 8);

    hyps::Rng r0(500);
    ToySegModel base(small_config(), r0);
    Matrix want = base.predict_patch(in);

    for (auto spec : {hyps::AdapterSpec::lora(2), hyps::AdapterSpec::seqlora(2),
                      hyps::AdapterSpec::cps(2)}) {
        hyps::Rng r(500);
        ToySegModel m(small_config(), r);
        m.attach_adapters(spec, r);
        REQUIRE(hyps::max_abs_diff(m.predict_patch(in), want) <= 1e-12);
    }
    for (auto spec : {hyps::AdapterSpec::pissa(2), hyps::AdapterSpec::hyps(2)}) {
        hyps::Rng r(500);
        ToySegModel m(small_config(), r);
        m.attach_adapters(spec, r);
        REQUIRE(hyps::max_abs_diff(m.predict_patch(in), want) <= 1e-8);
    }
}

TEST_CASE("state save and restore round trips") {
    hyps::Rng rng(9);
    ToySegModel model(small_config(), rng);
    model.attach_adapters(hyps::AdapterSpec::cps(2), rng);
    hyps::ModelState s = model.get_state();
    REQUIRE(s.size() == model.params().size());

    hyps::Rng in_rng(10);
    Matrix in = hyps::extract_patch_input(random_volume(8, in_rng), 0, 0, 0, 8);
    Matrix before = model.predict_patch(in);

    // Scramble, then restore.
    hyps::ModelState scr = s;
    for (Matrix& m : scr)
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] += 0.1;
    model.set_state(scr);
    REQUIRE_FALSE(hyps::max_abs_diff(model.predict_patch(in), before) <= 1e-12);
    model.set_state(s);
    REQUIRE(hyps::max_abs_diff(model.predict_patch(in), before) == 0.0);

    hyps::ModelState short_state(s.begin(), s.end() - 1);
    REQUIRE_THROWS_AS(model.set_state(short_state), hyps::UsageError);
    hyps::ModelState bad = s;
    bad[0] = Matrix(2, 2);
    REQUIRE_THROWS_MATCHES(model.set_state(bad), hyps::ShapeError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("patch_embed.w")));
}

TEST_CASE("whole-volume inference tiles, pads, and crops") {
    hyps::Rng rng(11);
    ToySegModel model(small_config(), rng);

    SECTION("volume equal to one patch") {
        Volume v = random_volume(8, rng);
        Volume out = model.infer_volume(v);
        Matrix direct = model.predict_patch(hyps::extract_patch_input(v, 0, 0, 0, 8));
        std::size_t i = 0;
        for (std::size_t z = 0; z < 8; ++z)
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t x = 0; x < 8; ++x) REQUIRE(out.at(x, y, z) == direct(0, i++));
    }

    SECTION("non-multiple volume matches manual pad and crop") {
        Volume v(12, 9, 8);
        for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(0.0, 1.0);
        Volume out = model.infer_volume(v);
        REQUIRE(out.nx() == 12);
        REQUIRE(out.ny() == 9);
        REQUIRE(out.nz() == 8);

        Volume padded(16, 16, 8);
        for (std::size_t z = 0; z < 8; ++z)
            for (std::size_t y = 0; y < 9; ++y)
                for (std::size_t x = 0; x < 12; ++x) padded.at(x, y, z) = v.at(x, y, z);
        for (std::size_t z0 = 0; z0 < 8; z0 += 8)
            for (std::size_t y0 = 0; y0 < 16; y0 += 8)
                for (std::size_t x0 = 0; x0 < 16; x0 += 8) {
                    Matrix pr = model.predict_patch(
                        hyps::extract_patch_input(padded, x0, y0, z0, 8));
                    std::size_t i = 0;
                    for (std::size_t z = 0; z < 8; ++z)
                        for (std::size_t y = 0; y < 8; ++y)
                            for (std::size_t x = 0; x < 8; ++x, ++i) {
                                const std::size_t gx = x0 + x, gy = y0 + y, gz = z0 + z;
                                if (gx < 12 && gy < 9 && gz < 8)
                                    REQUIRE(out.at(gx, gy, gz) == pr(0, i));
                            }
                }
    }

    SECTION("undersized volume is rejected") {
        REQUIRE_THROWS_AS(model.infer_volume(Volume(8, 8, 7)), hyps::ShapeError);
    }

    SECTION("spacing is carried through") {
        Volume v = random_volume(8, rng);
        v.set_spacing({0.5, 0.7, 1.1});
        REQUIRE(model.infer_volume(v).spacing() == hyps::Spacing{0.5, 0.7, 1.1});
    }
}

TEST_CASE("mask prediction thresholds the probability volume") {
    hyps::Rng rng(12);
    ToySegModel model(small_config(), rng);
    Volume v = random_volume(8, rng);
    Volume prob = model.infer_volume(v);
    BinaryMask mask = model.predict_mask(v, 0.5);
    for (std::size_t z = 0; z < 8; ++z)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x)
                REQUIRE(mask.at(x, y, z) == (prob.at(x, y, z) >= 0.5 ? 1 : 0));
}

TEST_CASE("construction is deterministic in the seed") {
    hyps::Rng r1(314), r2(314);
    ToySegModel a(small_config(), r1), b(small_config(), r2);
    REQUIRE(a.get_state() == b.get_state());

    hyps::Rng r3(315);
    ToySegModel c(small_config(), r3);
    REQUIRE_FALSE(c.get_state() == a.get_state());
}
