// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kalbert::text {

/// Decodes UTF-8 into code points. Throws InvalidUtf8 on malformed input,
/// overlong forms, surrogates and values above U+10FFFF.
std::u32string decode_utf8(std::string_view bytes);

bool is_valid_utf8(std::string_view bytes) noexcept;

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view cps);

/// Canonical composition (NFC). Input must be valid UTF-8.
std::string normalize_nfc(std::string_view utf8);

bool is_space(char32_t cp) noexcept;

/// Splits on Unicode whitespace; no empty pieces.
std::vector<std::string> split_whitespace(std::string_view utf8);

/// NFC, then every whitespace run replaced by one ASCII space, trimmed.
std::string normalize_line(std::string_view utf8);

}  // namespace kalbert::text
