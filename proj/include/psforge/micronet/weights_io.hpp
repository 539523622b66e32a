#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psforge/core/error.hpp"
#include "psforge/core/tensor_file.hpp"
#include "psforge/micronet/network.hpp"

namespace psforge {

// Model container: magic, u32 LE manifest length, JSON manifest (layer list,
// shapes, format version, architecture fingerprint), then one TensorFile
// blob per parameter tensor in declaration order. Payloads are f32.
inline constexpr char kModelMagic[8] = {'P', 'S', 'M', 'O', 'D', 'L', '0', '\n'};
inline constexpr int kModelFormatVersion = 1;

template <typename T>
void save_model(const std::string& path, MicroNet<T>& net) {
    nlohmann::json manifest;
    manifest["format_version"] = kModelFormatVersion;
    manifest["fingerprint"] = net.fingerprint();
    const NetConfig& c = net.config();
    manifest["config"] = {{"input_w", c.input_w},
                          {"init_filters", c.init_filters},
                          {"growth", c.growth},
                          {"transition_channels", c.transition_channels},
                          {"hidden_units", c.hidden_units},
                          {"dropout_p", c.dropout_p}};
    manifest["layers"] = net.layer_specs();
    nlohmann::json tensors = nlohmann::json::array();
    for (const ParamRef<T>& p : net.params())
        tensors.push_back({{"name", p.name}, {"dims", p.dims}});
    manifest["tensors"] = tensors;

    const std::string mtext = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_model: cannot open " + path);
    f.write(kModelMagic, 8);
    detail::put_u32_le(f, uint32_t(mtext.size()));
    f.write(mtext.data(), std::streamsize(mtext.size()));
    for (const ParamRef<T>& p : net.params()) {
        std::vector<float> payload(p.value->size());
        for (size_t i = 0; i < payload.size(); ++i) payload[i] = float((*p.value)[i]);
        write_tensor(f, p.dims, payload);
    }
    if (!f) throw DataError("save_model: write failed for " + path);
}

inline NetConfig read_model_config(const std::string& path, uint64_t* fingerprint = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_model: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kModelMagic, 8) != 0)
        throw DataError("load_model: bad magic in " + path);
    const uint32_t mlen = detail::get_u32_le(f);
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), mlen);
    if (!f) throw DataError("load_model: truncated manifest in " + path);
    nlohmann::json manifest = nlohmann::json::parse(mtext);
    if (manifest.at("format_version").get<int>() != kModelFormatVersion)
        throw DataError("load_model: unsupported format version in " + path);
    const auto& jc = manifest.at("config");
    NetConfig cfg;
    cfg.input_w = jc.at("input_w").get<int>();
    cfg.init_filters = jc.at("init_filters").get<int>();
    cfg.growth = jc.at("growth").get<int>();
    cfg.transition_channels = jc.at("transition_channels").get<int>();
    cfg.hidden_units = jc.at("hidden_units").get<int>();
    cfg.dropout_p = jc.at("dropout_p").get<double>();
    if (fingerprint) *fingerprint = manifest.at("fingerprint").get<uint64_t>();
    return cfg;
}

// Loads weights into a net already built with the stored configuration. The
// stored fingerprint must match the architecture the code would build.
template <typename T>
void load_model(const std::string& path, MicroNet<T>& net) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_model: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kModelMagic, 8) != 0)
        throw DataError("load_model: bad magic in " + path);
    const uint32_t mlen = detail::get_u32_le(f);
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), mlen);
    nlohmann::json manifest = nlohmann::json::parse(mtext);
    const uint64_t stored = manifest.at("fingerprint").get<uint64_t>();
    if (stored != net.fingerprint())
        throw DataError("load_model: architecture fingerprint mismatch in " + path);
    for (ParamRef<T>& p : net.params()) {
        Tensor t = read_tensor(f, path + ":" + p.name);
        if (t.dims != p.dims || t.data.size() != p.value->size())
            throw DataError("load_model: tensor shape mismatch for " + p.name);
        for (size_t i = 0; i < t.data.size(); ++i) {
            if (!std::isfinite(t.data[i]))
                throw DataError("load_model: non-finite weight in " + p.name);
            (*p.value)[i] = T(t.data[i]);
        }
    }
}

}  // namespace psforge
