#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msggan/core/errors.hpp"
#include "msggan/core/tensor.hpp"

namespace msggan {

// Binary container: magic, version, JSON header (metadata + tensor table),
// raw little-endian float32 payload. Parameter bytes are copied verbatim, so
// save -> load -> save is byte-identical for the payload. Writes go to a
// temp file and are renamed into place.
struct Checkpoint {
    static constexpr std::uint32_t kMagic = 0x4d53474b;  // "MSGK"
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json table = nlohmann::json::array();
        std::size_t offset = 0;
        for (const auto& [name, t] : tensors) {
            table.push_back({{"name", name},
                             {"shape", t.shape()},
                             {"offset", offset},
                             {"count", t.numel()}});
            offset += t.numel();
        }
        nlohmann::json header = {{"meta", meta}, {"tensors", table}};
        const std::string hs = header.dump();

        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw ConfigError("cannot write checkpoint: " + tmp.string());
            const std::uint32_t magic = kMagic, version = kVersion;
            const std::uint64_t hlen = hs.size();
            out.write(reinterpret_cast<const char*>(&magic), sizeof magic);
            out.write(reinterpret_cast<const char*>(&version), sizeof version);
            out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
            out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
            for (const auto& [name, t] : tensors)
                out.write(reinterpret_cast<const char*>(t.data()),
                          static_cast<std::streamsize>(t.numel() * sizeof(float)));
            if (!out) throw ConfigError("short write on checkpoint: " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
        std::uint32_t magic = 0, version = 0;
        std::uint64_t hlen = 0;
        in.read(reinterpret_cast<char*>(&magic), sizeof magic);
        in.read(reinterpret_cast<char*>(&version), sizeof version);
        in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
        if (!in || magic != kMagic)
            throw ConfigError("not a checkpoint file: " + path.string());
        if (version != kVersion)
            throw ConfigError("checkpoint version mismatch: file has v" +
                              std::to_string(version) + ", this build reads v" +
                              std::to_string(kVersion));
        std::string hs(hlen, '\0');
        in.read(hs.data(), static_cast<std::streamsize>(hlen));
        nlohmann::json header = nlohmann::json::parse(hs);

        Checkpoint ck;
        ck.meta = header.at("meta");
        for (const auto& entry : header.at("tensors")) {
            Shape shape = entry.at("shape").get<Shape>();
            Tensor<float> t(shape);
            in.read(reinterpret_cast<char*>(t.data()),
                    static_cast<std::streamsize>(t.numel() * sizeof(float)));
            ck.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
        if (!in) throw ConfigError("truncated checkpoint: " + path.string());
        return ck;
    }
};

}  // namespace msggan
