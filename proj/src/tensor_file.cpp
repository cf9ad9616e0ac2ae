// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "otfedit/tensor_io.hpp"

namespace otf {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

constexpr char kMagic[4] = {'O', 'T', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw IoError("tensor data truncated");
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace

std::string encode_tensor_bytes(const TensorFile& tensor) {
    std::uint64_t count = 1;
    for (auto d : tensor.dims) count *= d;
    if (count != tensor.values.size()) throw ShapeError("tensor dims do not match value count");
    std::string out(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put(out, d);
    out.append(reinterpret_cast<const char*>(tensor.values.data()), tensor.values.size() * sizeof(float));
    return out;
}

TensorFile decode_tensor_bytes(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a tensor file (bad magic)");
    std::size_t pos = 4;
    if (take<std::uint32_t>(bytes, pos) != kVersion) throw IoError("unsupported tensor file version");
    const auto rank = take<std::uint32_t>(bytes, pos);
    if (rank > kMaxRank) throw IoError("tensor rank too large");
    TensorFile t;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims.push_back(take<std::uint64_t>(bytes, pos));
        count *= t.dims.back();
    }
    if (bytes.size() - pos != count * sizeof(float)) throw IoError("tensor payload size does not match its dims");
    t.values.resize(count);
    std::memcpy(t.values.data(), bytes.data() + pos, count * sizeof(float));
    return t;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor) {
    const auto bytes = encode_tensor_bytes(tensor);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return decode_tensor_bytes(buffer.str());
}

LatentTensor<float> latent_from_tensor_file(const TensorFile& file) {
    if (file.dims.size() != 3) throw ShapeError("latent file must hold a rank-3 tensor");
    const LatentShape shape{static_cast<int>(file.dims[0]), static_cast<int>(file.dims[1]),
                            static_cast<int>(file.dims[2])};
    LatentTensor<float> latent(shape);
    std::copy(file.values.begin(), file.values.end(), latent.values().data());
    return latent;
}

TensorFile tensor_file_from_latent(const LatentTensor<float>& latent) {
    const auto& s = latent.shape();
    return {{static_cast<std::uint64_t>(s.channels), static_cast<std::uint64_t>(s.height),
             static_cast<std::uint64_t>(s.width)},
            std::vector<float>(latent.values().data(), latent.values().data() + latent.values().size())};
}

}  // namespace otf
