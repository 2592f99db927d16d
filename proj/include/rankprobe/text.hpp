#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rankprobe::text {

/// Decodes UTF-8 into code points. Invalid sequences decode to U+FFFD.
std::u32string to_codepoints(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);
void append_utf8(std::string& out, char32_t cp);

/// Unicode simple case folding, code point by code point.
std::string casefold(std::string_view utf8);

[[nodiscard]] bool is_cjk(char32_t cp);
/// Letters and digits outside the CJK scripts; these form multi-character runs.
[[nodiscard]] bool is_word_char(char32_t cp);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Lowercased, trimmed, internal whitespace collapsed to one ASCII space.
std::string normalize_for_dedup(std::string_view s);

} // namespace rankprobe::text
