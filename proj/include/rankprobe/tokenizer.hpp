#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rankprobe {

/// Text to ordered token list. Implementations are deterministic and thread-safe;
/// tokenizing the empty string yields no tokens.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    [[nodiscard]] virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Default tokenizer: runs of letters/digits outside the CJK scripts become one
/// lowercased token, every CJK code point is its own token, everything else separates.
class UnigramTokenizer final : public Tokenizer {
  public:
    [[nodiscard]] std::vector<std::string> tokenize(std::string_view text) const override;
    [[nodiscard]] std::string name() const override { return "unigram"; }
};

/// Forward maximum matching against a word list. CJK spans are segmented greedily
/// by the longest dictionary word starting at each position, falling back to a
/// single code point; non-CJK text is tokenized as in UnigramTokenizer.
class DictionaryTokenizer final : public Tokenizer {
  public:
    explicit DictionaryTokenizer(std::vector<std::string> words);
    /// One word per line; blank lines and anything after the first whitespace are ignored.
    static DictionaryTokenizer from_file(const std::filesystem::path& path);

    [[nodiscard]] std::vector<std::string> tokenize(std::string_view text) const override;
    [[nodiscard]] std::string name() const override { return "dictionary"; }
    [[nodiscard]] std::size_t size() const noexcept { return words_.size(); }

  private:
    std::unordered_set<std::u32string> words_;
    std::size_t max_len_ = 1;
};

/// Tokens supplied externally, keyed by the exact text they were produced from.
/// Texts with no entry fall back to an optional tokenizer, or tokenize to nothing.
class PretokenizedTokenizer final : public Tokenizer {
  public:
    explicit PretokenizedTokenizer(std::shared_ptr<const Tokenizer> fallback = nullptr)
        : fallback_(std::move(fallback)) {}

    void add(std::string text, std::vector<std::string> tokens);
    /// Reads `id \t space-joined-tokens` lines and binds each id's tokens to
    /// `texts_by_id.at(id)`. Unknown ids are a LookupError.
    void add_file(const std::filesystem::path& path,
                  const std::unordered_map<std::string, std::string>& texts_by_id);

    [[nodiscard]] std::vector<std::string> tokenize(std::string_view text) const override;
    [[nodiscard]] std::string name() const override { return "pretokenized"; }
    [[nodiscard]] std::size_t size() const noexcept { return table_.size(); }

  private:
    std::unordered_map<std::string, std::vector<std::string>> table_;
    std::shared_ptr<const Tokenizer> fallback_;
};

} // namespace rankprobe
