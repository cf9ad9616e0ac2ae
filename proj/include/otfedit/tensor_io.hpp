// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "otfedit/tensor.hpp"

namespace otf {

//
// Tensor files: "OTFT" magic, u32 version (1), u32 rank, rank x u64 dims,
// then float32 values in row-major order. All integers and floats little-endian.
//

struct TensorFile {
    std::vector<std::uint64_t> dims;
    std::vector<float> values;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor_file(const std::filesystem::path& path);

std::string encode_tensor_bytes(const TensorFile& tensor);
TensorFile decode_tensor_bytes(std::string_view bytes);

LatentTensor<float> latent_from_tensor_file(const TensorFile& file);
TensorFile tensor_file_from_latent(const LatentTensor<float>& latent);

}  // namespace otf
