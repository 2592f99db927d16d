#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/run.hpp"
#include "rankprobe/tokenizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rankprobe {

enum class IdfForm {
    /// ln(1 + (N - df + 0.5) / (df + 0.5)); strictly positive.
    Lucene,
    /// ln((N - df + 0.5) / (df + 0.5)) with negative values replaced by
    /// epsilon * (mean idf over the vocabulary), as in the rank_bm25 Okapi scorer.
    ClassicEpsilon,
};

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
    IdfForm idf = IdfForm::Lucene;
    double epsilon = 0.25;
};

/// Okapi BM25 inverted index. Mutated only through add(); reads are thread-safe.
class Bm25Index {
  public:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
    };

    /// Throws std::invalid_argument unless k1 > 0 and 0 <= b <= 1.
    explicit Bm25Index(Bm25Params params = {});

    static Bm25Index build(std::span<const Passage> passages, const Tokenizer& tok, Bm25Params params = {});

    /// Appends one document. DuplicateIdError if the id is already indexed.
    void add(std::string doc_id, std::span<const std::string> tokens);

    [[nodiscard]] const Bm25Params& params() const noexcept { return params_; }
    [[nodiscard]] std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    [[nodiscard]] double avgdl() const noexcept;
    [[nodiscard]] std::size_t df(const std::string& term) const;
    [[nodiscard]] std::span<const Posting> postings(const std::string& term) const;
    [[nodiscard]] std::size_t doc_len(const std::string& doc_id) const;
    [[nodiscard]] const std::string& doc_id(std::size_t index) const { return doc_ids_.at(index); }
    [[nodiscard]] std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    [[nodiscard]] double idf(const std::string& term) const;

    /// Sum over query token occurrences; terms absent from the document add 0.
    /// LookupError for unknown doc ids.
    [[nodiscard]] double score(std::span<const std::string> query_tokens, const std::string& doc_id) const;

    /// Top-k by descending score, ties by ascending doc id; zero-score docs are never returned.
    [[nodiscard]] RankedList search(std::span<const std::string> query_tokens, std::size_t k,
                                    std::string query_id = {}) const;

  private:
    [[nodiscard]] double idf_from_df(std::size_t df) const;
    [[nodiscard]] double term_weight(std::uint32_t tf, std::uint32_t doc_len, double avgdl) const;
    void refresh_average_idf();

    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lens_;
    std::unordered_map<std::string, std::uint32_t> doc_index_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::uint64_t total_len_ = 0;
    double average_idf_ = 0.0;
};

RankedList bm25_search(const Bm25Index& idx, std::string_view query, const Tokenizer& tok, std::size_t k,
                       std::string query_id = {});

/// BM25 run over every query of a dataset.
Run bm25_run(const Dataset& d, const Tokenizer& tok, std::size_t k, Bm25Params params = {}, std::string name = "bm25");

} // namespace rankprobe
