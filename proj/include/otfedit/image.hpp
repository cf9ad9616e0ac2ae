// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace otf {

// 8-bit RGB image, rows top to bottom, channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    bool empty() const { return width <= 0 || height <= 0; }
    std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    bool operator==(const Image&) const = default;
};

Image solid_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

Image decode_png(std::string_view bytes);
std::string encode_png(const Image& image);
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// Reads only the header; returns false when the file is not a decodable PNG.
bool probe_png(const std::filesystem::path& path, int* width = nullptr, int* height = nullptr);

Image resize_bilinear(const Image& image, int width, int height);

// Largest absolute channel difference; images must share dimensions.
int max_abs_difference(const Image& a, const Image& b);

}  // namespace otf
