// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace otf {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string sha256_hex(std::string_view bytes);

// Stable 64-bit seed derived from arbitrary bytes.
std::uint64_t stable_hash64(std::string_view bytes);

}  // namespace otf
