#include "rankprobe/tokenizer.hpp"

#include "rankprobe/error.hpp"
#include "rankprobe/text.hpp"

#include <fstream>

namespace rankprobe {
namespace {

// Shared scanner: word runs become folded tokens, CJK spans are handed to `on_cjk`.
template <typename OnCjk>
void scan(std::string_view text, std::vector<std::string>& out, OnCjk&& on_cjk) {
    const std::u32string cps = text::to_codepoints(text);
    std::size_t i = 0;
    while (i < cps.size()) {
        const char32_t c = cps[i];
        if (text::is_cjk(c)) {
            std::size_t j = i;
            while (j < cps.size() && text::is_cjk(cps[j])) ++j;
            on_cjk(std::u32string_view(cps).substr(i, j - i), out);
            i = j;
        } else if (text::is_word_char(c)) {
            std::size_t j = i;
            while (j < cps.size() && text::is_word_char(cps[j])) ++j;
            out.push_back(text::casefold(text::to_utf8(std::u32string_view(cps).substr(i, j - i))));
            i = j;
        } else {
            ++i;
        }
    }
}

} // namespace

std::vector<std::string> UnigramTokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    scan(text, out, [](std::u32string_view span, std::vector<std::string>& tokens) {
        for (char32_t c : span) {
            std::string t;
            text::append_utf8(t, c);
            tokens.push_back(std::move(t));
        }
    });
    return out;
}

DictionaryTokenizer::DictionaryTokenizer(std::vector<std::string> words) {
    for (const auto& w : words) {
        const auto cps = text::to_codepoints(text::casefold(text::trim(w)));
        if (cps.empty()) continue;
        max_len_ = std::max(max_len_, cps.size());
        words_.insert(cps);
    }
}

DictionaryTokenizer DictionaryTokenizer::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dictionary " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const auto end = trimmed.find_first_of(" \t");
        words.emplace_back(trimmed.substr(0, end));
    }
    return DictionaryTokenizer(std::move(words));
}

std::vector<std::string> DictionaryTokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    scan(text, out, [this](std::u32string_view span, std::vector<std::string>& tokens) {
        std::size_t i = 0;
        while (i < span.size()) {
            std::size_t len = std::min(max_len_, span.size() - i);
            for (; len > 1; --len) {
                if (words_.contains(std::u32string(span.substr(i, len)))) break;
            }
            tokens.push_back(text::casefold(text::to_utf8(span.substr(i, len))));
            i += len;
        }
    });
    return out;
}

void PretokenizedTokenizer::add(std::string text, std::vector<std::string> tokens) {
    table_.insert_or_assign(std::move(text), std::move(tokens));
}

void PretokenizedTokenizer::add_file(const std::filesystem::path& path,
                                     const std::unordered_map<std::string, std::string>& texts_by_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open token file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path.string(), lineno, "expected `id<TAB>tokens`");
        const std::string id = line.substr(0, tab);
        const auto it = texts_by_id.find(id);
        if (it == texts_by_id.end()) throw LookupError(path.string() + ": unknown id '" + id + "'");
        std::vector<std::string> tokens;
        for (auto tok : text::split(std::string_view(line).substr(tab + 1), ' ')) {
            tok = text::trim(tok);
            if (!tok.empty()) tokens.push_back(text::casefold(tok));
        }
        add(it->second, std::move(tokens));
    }
}

std::vector<std::string> PretokenizedTokenizer::tokenize(std::string_view text) const {
    if (const auto it = table_.find(std::string(text)); it != table_.end()) return it->second;
    if (fallback_) return fallback_->tokenize(text);
    return {};
}

} // namespace rankprobe
