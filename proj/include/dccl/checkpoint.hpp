#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dccl/net.hpp"

namespace dccl {

// Checkpoint file: 8-byte magic, little-endian u64 JSON header length, the
// JSON header, then all tensors as little-endian float32 in header order.
// Parameters come first, optimizer velocities second.
struct Checkpoint {
    ModelParams<float> params;
    SgdState<float> opt;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    std::string config_hash;
};

namespace detail {
constexpr char kCkptMagic[8] = {'D', 'C', 'C', 'L', 'C', 'K', 'P', '1'};
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = "dccl-checkpoint-v1";
    header["arch"] = {{"in_channels", ckpt.params.cfg.in_channels},
                      {"base_channels", ckpt.params.cfg.base_channels},
                      {"embed_dim", ckpt.params.cfg.embed_dim}};
    header["step"] = ckpt.step;
    header["seed"] = ckpt.seed;
    header["config_hash"] = ckpt.config_hash;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : ckpt.params.tensors) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"kind", "param"}});
    }
    for (const auto& t : ckpt.opt.velocity) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"kind", "velocity"}});
    }
    header["tensors"] = tensors;

    const std::string hs = header.dump();
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path.string());
    std::fwrite(detail::kCkptMagic, 1, 8, f);
    const std::uint64_t len = hs.size();
    std::fwrite(&len, sizeof(len), 1, f);
    std::fwrite(hs.data(), 1, hs.size(), f);
    for (const auto& t : ckpt.params.tensors) std::fwrite(t.v.data(), sizeof(float), t.v.size(), f);
    for (const auto& t : ckpt.opt.velocity) std::fwrite(t.v.data(), sizeof(float), t.v.size(), f);
    if (std::fclose(f) != 0) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, detail::kCkptMagic, 8) != 0) {
        std::fclose(f);
        throw IoError("not a checkpoint file: " + path.string());
    }
    if (std::fread(&len, sizeof(len), 1, f) != 1) {
        std::fclose(f);
        throw IoError("truncated checkpoint header: " + path.string());
    }
    std::string hs(len, '\0');
    if (std::fread(hs.data(), 1, len, f) != len) {
        std::fclose(f);
        throw IoError("truncated checkpoint header: " + path.string());
    }
    nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ckpt;
    NetConfig cfg;
    cfg.in_channels = header.at("arch").at("in_channels");
    cfg.base_channels = header.at("arch").at("base_channels");
    cfg.embed_dim = header.at("arch").at("embed_dim");
    ckpt.params = make_params<float>(cfg);
    ckpt.opt = SgdState<float>::make(ckpt.params);
    ckpt.step = header.at("step");
    ckpt.seed = header.at("seed");
    ckpt.config_hash = header.value("config_hash", "");

    std::size_t pi = 0, vi = 0;
    for (const auto& te : header.at("tensors")) {
        const std::string kind = te.at("kind");
        const std::string name = te.at("name");
        NamedTensor<float>* dst = nullptr;
        if (kind == "param") {
            dst = &ckpt.params.tensors.at(pi++);
        } else {
            dst = &ckpt.opt.velocity.at(vi++);
        }
        if (dst->name != name || dst->shape != te.at("shape").get<std::vector<int>>()) {
            std::fclose(f);
            throw IoError("checkpoint tensor table mismatch at " + name);
        }
        if (std::fread(dst->v.data(), sizeof(float), dst->v.size(), f) != dst->v.size()) {
            std::fclose(f);
            throw IoError("truncated checkpoint payload at " + name);
        }
    }
    std::fclose(f);
    return ckpt;
}

}  // namespace dccl
