#pragma once

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "advbench/classifier.hpp"
#include "advbench/errors.hpp"

namespace advbench::models {

// Checkpoint container: "ADVB1\n", one line of JSON (architecture, shapes,
// seed, optional defense metadata), then the raw little-endian float64
// parameter blobs in layer order (weight before bias).

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ConfigError("checkpoint: truncated parameter blob");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline nlohmann::json layer_to_json(const Layer& layer) {
    switch (layer.kind) {
        case LayerKind::affine:
            return {{"kind", "affine"}, {"in", layer.weight.dim(0)}, {"out", layer.weight.dim(1)}};
        case LayerKind::conv2d:
            return {{"kind", "conv2d"},
                    {"in_channels", layer.weight.dim(1)},
                    {"out_channels", layer.weight.dim(0)}};
        case LayerKind::relu:
            return {{"kind", "relu"}};
        case LayerKind::flatten:
            return {{"kind", "flatten"}};
    }
    throw std::logic_error("unreachable layer kind");
}

}  // namespace detail

inline void save_checkpoint(const Classifier& model, const std::string& path, std::uint64_t seed,
                            const nlohmann::json& defense_meta = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("checkpoint: cannot open for writing: " + path);
    nlohmann::json header;
    header["architecture"] = nlohmann::json::array();
    for (const auto& layer : model.layers) header["architecture"].push_back(detail::layer_to_json(layer));
    header["input_shape"] = model.input_shape;
    header["num_classes"] = model.classes;
    header["seed"] = seed;
    if (!defense_meta.is_null()) header["defense"] = defense_meta;
    os << "ADVB1\n" << header.dump() << "\n";
    for (const auto& layer : model.layers) {
        if (layer.kind != LayerKind::affine && layer.kind != LayerKind::conv2d) continue;
        for (double v : layer.weight.data()) detail::write_f64_le(os, v);
        for (double v : layer.bias.data()) detail::write_f64_le(os, v);
    }
    if (!os) throw RuntimeFailure("checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
    Classifier model;
    std::uint64_t seed = 0;
    nlohmann::json header;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: missing file: " + path);
    std::string magic;
    std::getline(is, magic);
    if (magic != "ADVB1") throw ConfigError("checkpoint: bad magic \"" + magic + "\" in " + path);
    std::string header_line;
    std::getline(is, header_line);
    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded()) throw ConfigError("checkpoint: unparseable JSON header in " + path);

    LoadedCheckpoint out;
    out.header = header;
    out.seed = header.value("seed", std::uint64_t{0});
    Classifier& m = out.model;
    m.input_shape = header.at("input_shape").get<Shape>();
    m.classes = header.at("num_classes").get<std::size_t>();

    for (const auto& lj : header.at("architecture")) {
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "affine") {
            const auto in = lj.at("in").get<std::size_t>(), outd = lj.at("out").get<std::size_t>();
            m.layers.push_back({LayerKind::affine, Tensor::zeros({in, outd}, true), Tensor::zeros({outd}, true)});
        } else if (kind == "conv2d") {
            const auto ic = lj.at("in_channels").get<std::size_t>(), oc = lj.at("out_channels").get<std::size_t>();
            m.layers.push_back({LayerKind::conv2d, Tensor::zeros({oc, ic, 3, 3}, true), Tensor::zeros({oc}, true)});
        } else if (kind == "relu") {
            m.layers.push_back({LayerKind::relu, {}, {}});
        } else if (kind == "flatten") {
            m.layers.push_back({LayerKind::flatten, {}, {}});
        } else {
            throw ConfigError("checkpoint: unknown layer kind \"" + kind + "\"");
        }
    }
    for (auto& layer : m.layers) {
        if (layer.kind != LayerKind::affine && layer.kind != LayerKind::conv2d) continue;
        for (auto& v : layer.weight.data()) v = detail::read_f64_le(is);
        for (auto& v : layer.bias.data()) v = detail::read_f64_le(is);
    }
    is.peek();
    if (!is.eof()) throw ConfigError("checkpoint: trailing bytes after parameter blobs in " + path);
    return out;
}

}  // namespace advbench::models
