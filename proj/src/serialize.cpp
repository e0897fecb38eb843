#include "clmrkit/serialize.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "clmrkit/errors.hpp"

namespace clmrkit::io {

namespace {

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw Error("truncated tensor file");
    return v;
}

} // namespace

void save_tensors(const std::string& path, const std::map<std::string, ad::Tensor>& tensors,
                  const nlohmann::json& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f.write(kTensorMagic, sizeof(kTensorMagic));
    std::string meta_str = meta.dump();
    put<uint64_t>(f, meta_str.size());
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    put<uint32_t>(f, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        put<uint16_t>(f, static_cast<uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(f, 0); // dtype: float32
        put<uint8_t>(f, static_cast<uint8_t>(tensor.ndim()));
        for (int64_t d : tensor.shape()) put<int64_t>(f, d);
    }
    for (const auto& [name, tensor] : tensors) {
        (void)name;
        f.write(reinterpret_cast<const char*>(tensor.data().data()),
                static_cast<std::streamsize>(tensor.data().size() * sizeof(float)));
    }
    if (!f) throw Error("short write to " + path);
}

TensorFile load_tensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kTensorMagic, 8) != 0)
        throw Error("bad magic in " + path);

    TensorFile out;
    auto meta_len = get<uint64_t>(f);
    out.meta_json.resize(meta_len);
    f.read(out.meta_json.data(), static_cast<std::streamsize>(meta_len));
    if (!f) throw Error("truncated metadata in " + path);

    auto count = get<uint32_t>(f);
    std::vector<std::pair<std::string, std::vector<int64_t>>> table;
    table.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        auto name_len = get<uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        auto dtype = get<uint8_t>(f);
        if (dtype != 0) throw Error("unsupported dtype in " + path);
        auto ndim = get<uint8_t>(f);
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = get<int64_t>(f);
        table.emplace_back(std::move(name), std::move(shape));
    }
    for (auto& [name, shape] : table) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        std::vector<float> data(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!f) throw Error("truncated payload for '" + name + "' in " + path);
        out.tensors.emplace(name, ad::Tensor::from_data(shape, std::move(data)));
    }
    return out;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

std::string fnv1a_file_hex(const std::string& path) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    return std::string(buf);
}

} // namespace clmrkit::io
