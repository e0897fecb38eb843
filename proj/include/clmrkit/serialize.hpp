#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "clmrkit/autodiff.hpp"

// Named-tensor container: an 8-byte versioned magic, a JSON metadata header,
// a tensor table (name, dtype, shape), then raw little-endian float32
// payloads in table order. Entries are sorted by name, so identical contents
// produce identical bytes.

namespace clmrkit::io {

inline constexpr char kTensorMagic[8] = {'C', 'L', 'M', 'R', 'T', 'E', 'N', '1'};

void save_tensors(const std::string& path, const std::map<std::string, ad::Tensor>& tensors,
                  const nlohmann::json& meta);

struct TensorFile {
    std::map<std::string, ad::Tensor> tensors;
    std::string meta_json;
};

TensorFile load_tensors(const std::string& path);

// FNV-1a over a file's bytes; used to stamp reports with a checkpoint hash.
uint64_t fnv1a_file(const std::string& path);
std::string fnv1a_file_hex(const std::string& path);

} // namespace clmrkit::io
