#pragma once

// Checkpoint container: a JSON text header (format version, named parameter
// list with shapes, precision, RNG state) terminated by a newline, followed
// by little-endian raw value arrays in header order. Round-trips bit-exactly.

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "loco/tensor.hpp"

namespace loco {

inline constexpr int kCheckpointVersion = 1;

template <class Real>
struct Checkpoint {
    std::vector<std::pair<std::string, TensorT<Real>>> params;
    std::string rng_state;
    std::map<std::string, std::string> meta;
};

template <class Real>
inline const char* precision_name() {
    return sizeof(Real) == 4 ? "single" : "double";
}

template <class Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ck) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["precision"] = precision_name<Real>();
    header["rng_state"] = ck.rng_state;
    header["meta"] = ck.meta;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, t] : ck.params) {
        plist.push_back({{"name", name}, {"shape", t.shape}});
    }
    header["params"] = plist;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    f << header.dump() << '\n';
    for (const auto& [name, t] : ck.params) {
        (void)name;
        f.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(sizeof(Real) * t.data->size()));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("checkpoint: missing header");
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.at("format_version").get<int>() != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version");
    if (header.at("precision").get<std::string>() != precision_name<Real>())
        throw std::runtime_error("checkpoint: precision mismatch");

    Checkpoint<Real> ck;
    ck.rng_state = header.value("rng_state", std::string());
    if (header.contains("meta"))
        ck.meta = header["meta"].get<std::map<std::string, std::string>>();
    for (const auto& p : header.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
        TensorT<Real> t = TensorT<Real>::zeros(shape);
        f.read(reinterpret_cast<char*>(t.ptr()),
               static_cast<std::streamsize>(sizeof(Real) * t.data->size()));
        if (!f) throw std::runtime_error("checkpoint: truncated value array for " + name);
        ck.params.emplace_back(name, std::move(t));
    }
    return ck;
}

}  // namespace loco
