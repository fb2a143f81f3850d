#ifndef IDFLOW_IO_HPP
#define IDFLOW_IO_HPP

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace idflow {

static_assert(std::endian::native == std::endian::little,
              "blob files are little-endian; big-endian hosts are unsupported");

constexpr int kFormatMajor = 1;
constexpr int kFormatMinor = 0;
constexpr char kBlobMagic[8] = {'I', 'D', 'F', 'B', 'L', 'O', 'B', '1'};

// Self-describing container: magic, u64 header length, JSON header, then the
// float64 payload of every tensor in header order. One format serves
// datasets, checkpoints and generation dumps.
struct Blob {
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& get(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return t;
        }
        throw IoError("blob: missing tensor '" + name + "'");
    }
};

inline void write_blob(const std::string& path, Blob blob) {
    blob.header["format_version"] = {{"major", kFormatMajor}, {"minor", kFormatMinor}};
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, t] : blob.tensors) {
        index.push_back({{"name", name}, {"shape", t.shape}});
    }
    blob.header["tensors"] = std::move(index);
    const std::string head = blob.header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(kBlobMagic, sizeof(kBlobMagic));
        const std::uint64_t len = head.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
        for (const auto& [name, t] : blob.tensors) {
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
        if (!out) throw IoError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Blob read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 8) != std::string(kBlobMagic, 8)) {
        throw IoError("'" + path + "' is not an idflow blob file");
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string head(len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated header in '" + path + "'");

    Blob blob;
    blob.header = nlohmann::json::parse(head);
    const int major = blob.header.at("format_version").at("major").get<int>();
    if (major != kFormatMajor) {
        throw IoError("'" + path + "' has format major " + std::to_string(major) +
                      ", reader supports " + std::to_string(kFormatMajor));
    }
    for (const auto& entry : blob.header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("truncated payload for tensor '" + name + "' in '" + path + "'");
        blob.tensors.emplace_back(name, std::move(t));
    }
    return blob;
}

// %.17g round-trips doubles exactly and prints deterministically.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace idflow

#endif
