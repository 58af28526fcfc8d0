#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: an 8-byte magic "HYPSCKPT", u32 version, u32
// manifest byte length, a UTF-8 JSON manifest, then each tensor named
// in manifest["tensors"] as u32 rows, u32 cols and row-major float64,
// all little-endian. On top of that, save/load of whole models ("model"
// kind: every parameter) and of adapters ("adapter" kind: trainable
// parameters only, applied onto a matching base model).

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hyps/binio.hpp"
#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/model.hpp"

namespace hyps {

namespace detail {
constexpr char kCkptMagic[8] = {'H', 'Y', 'P', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;
} // namespace detail

struct Checkpoint {
    nlohmann::json manifest;
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix* find(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return &m;
        return nullptr;
    }
};

inline void write_checkpoint(const std::string& path, nlohmann::json manifest,
                             const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, m] : tensors)
        list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
    manifest["tensors"] = std::move(list);
    const std::string text = manifest.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing");
    os.write(detail::kCkptMagic, 8);
    put_u32(os, detail::kCkptVersion);
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : tensors) {
        put_u32(os, static_cast<std::uint32_t>(m->rows()));
        put_u32(os, static_cast<std::uint32_t>(m->cols()));
        for (std::size_t i = 0; i < m->size(); ++i) put_f64(os, m->data()[i]);
    }
    if (!os) throw FormatError(path + ": write failed");
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open for reading");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw FormatError(path + ": bad magic at offset 0");
    const std::uint32_t version = get_u32(is, path + ": version at offset 8");
    if (version != detail::kCkptVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at offset 8");
    const std::uint32_t mlen = get_u32(is, path + ": manifest length at offset 12");
    std::string text(mlen, '\0');
    if (!is.read(text.data(), mlen))
        throw FormatError(path + ": manifest truncated at offset 16");

    Checkpoint ck;
    try {
        ck.manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": manifest is not valid JSON (offset 16): " + e.what());
    }
    if (!ck.manifest.is_object() || !ck.manifest.contains("tensors") ||
        !ck.manifest["tensors"].is_array())
        throw FormatError(path + ": manifest lacks a tensors array");

    std::size_t offset = 16 + mlen;
    for (const nlohmann::json& t : ck.manifest["tensors"]) {
        if (!t.contains("name") || !t.contains("rows") || !t.contains("cols"))
            throw FormatError(path + ": tensor entry missing name/rows/cols in manifest");
        const std::string name = t["name"].get<std::string>();
        const std::uint32_t rows = get_u32(is, path + ": " + name + " rows at offset " +
                                                   std::to_string(offset));
        const std::uint32_t cols = get_u32(is, path + ": " + name + " cols at offset " +
                                                   std::to_string(offset + 4));
        if (rows != t["rows"].get<std::uint32_t>() || cols != t["cols"].get<std::uint32_t>())
            throw FormatError(path + ": " + name + " dims at offset " + std::to_string(offset) +
                              " disagree with the manifest");
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i)
            m.data()[i] = get_f64(is, path + ": " + name + " payload at offset " +
                                          std::to_string(offset + 8));
        offset += 8 + static_cast<std::size_t>(rows) * cols * 8;
        ck.tensors.emplace_back(name, std::move(m));
    }
    return ck;
}

// ---- model / adapter checkpoints ------------------------------------

namespace detail {

inline nlohmann::json config_json(const ToyModelConfig& c) {
    return {{"patch", c.patch},     {"embed_dim", c.embed_dim}, {"depths", c.depths},
            {"heads", c.heads},     {"window", c.window},       {"mlp_ratio", c.mlp_ratio}};
}

inline ToyModelConfig config_from_json(const nlohmann::json& j, const std::string& path) {
    try {
        ToyModelConfig c;
        c.patch = j.at("patch").get<std::size_t>();
        c.embed_dim = j.at("embed_dim").get<std::size_t>();
        c.depths = j.at("depths").get<std::vector<std::size_t>>();
        c.heads = j.at("heads").get<std::size_t>();
        c.window = j.at("window").get<std::size_t>();
        c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad model_config in manifest: " + e.what());
    }
}

inline nlohmann::json spec_json(const AdapterSpec& s) {
    return {{"variant", variant_name(s.variant)},
            {"rank_a", s.rank_a},
            {"rank_b", s.rank_b},
            {"scale_a", s.scale_a},
            {"scale_b", s.scale_b}};
}

inline AdapterSpec spec_from_json(const nlohmann::json& j, const std::string& path) {
    try {
        AdapterSpec s;
        const std::string name = j.at("variant").get<std::string>();
        const auto v = variant_from_name(name);
        if (!v) throw FormatError(path + ": unknown adapter variant \"" + name + "\"");
        s.variant = *v;
        s.rank_a = j.at("rank_a").get<std::size_t>();
        s.rank_b = j.at("rank_b").get<std::size_t>();
        s.scale_a = j.at("scale_a").get<double>();
        s.scale_b = j.at("scale_b").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad adapter entry in manifest: " + e.what());
    }
}

inline nlohmann::json layers_json(const ToySegModel& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const RegistryEntry& e : model.registry())
        layers.push_back({{"name", e.name}, {"role", role_name(e.role)}, {"m", e.m}, {"n", e.n}});
    return layers;
}

} // namespace detail

inline void save_model(ToySegModel& model, const std::string& path) {
    nlohmann::json manifest = {{"kind", "model"},
                               {"model_config", detail::config_json(model.config())},
                               {"adapter", detail::spec_json(model.spec())},
                               {"layers", detail::layers_json(model)}};
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (const ParamEntry& e : model.params()) tensors.emplace_back(e.name, e.value);
    write_checkpoint(path, std::move(manifest), tensors);
}

inline ToySegModel load_model(const std::string& path) {
    const Checkpoint ck = read_checkpoint(path);
    if (!ck.manifest.contains("kind") || ck.manifest["kind"] != "model")
        throw FormatError(path + ": not a model checkpoint");
    const ToyModelConfig cfg = detail::config_from_json(ck.manifest.at("model_config"), path);
    const AdapterSpec spec = detail::spec_from_json(ck.manifest.at("adapter"), path);
    Rng rng(0);
    ToySegModel model(cfg, rng);
    if (spec.variant != AdapterVariant::FullTuning) model.attach_adapters(spec, rng);
    std::vector<ParamEntry> table = model.params();
    if (table.size() != ck.tensors.size())
        throw FormatError(path + ": expected " + std::to_string(table.size()) +
                          " tensors for this architecture, found " +
                          std::to_string(ck.tensors.size()));
    for (ParamEntry& e : table) {
        const Matrix* m = ck.find(e.name);
        if (!m) throw FormatError(path + ": missing tensor " + e.name);
        if (!m->same_shape(*e.value))
            throw FormatError(path + ": tensor " + e.name + " has shape " + m->shape_str() +
                              ", expected " + e.value->shape_str());
        *e.value = *m;
    }
    return model;
}

inline void save_adapter(ToySegModel& model, const std::string& path) {
    nlohmann::json manifest = {{"kind", "adapter"},
                               {"model_config", detail::config_json(model.config())},
                               {"adapter", detail::spec_json(model.spec())},
                               {"layers", detail::layers_json(model)}};
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (const ParamEntry& e : model.params())
        if (e.trainable) tensors.emplace_back(e.name, e.value);
    write_checkpoint(path, std::move(manifest), tensors);
}

// Applies an adapter checkpoint onto an un-adapted base model: attaches
// per the stored spec (recomputing any SVD split from the base weights)
// and overwrites every stored trainable tensor.
inline void load_adapter(ToySegModel& model, const std::string& path, Rng& rng) {
    const Checkpoint ck = read_checkpoint(path);
    if (!ck.manifest.contains("kind") || ck.manifest["kind"] != "adapter")
        throw FormatError(path + ": not an adapter checkpoint");
    const AdapterSpec spec = detail::spec_from_json(ck.manifest.at("adapter"), path);
    if (spec.variant != AdapterVariant::FullTuning) model.attach_adapters(spec, rng);
    std::vector<ParamEntry> table = model.params();
    for (ParamEntry& e : table) {
        if (!e.trainable) continue;
        const Matrix* m = ck.find(e.name);
        if (!m) throw FormatError(path + ": missing tensor " + e.name);
        if (!m->same_shape(*e.value))
            throw FormatError(path + ": tensor " + e.name + " has shape " + m->shape_str() +
                              ", expected " + e.value->shape_str());
        *e.value = *m;
    }
}

} // namespace hyps
