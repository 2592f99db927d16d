#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/run.hpp"
#include "rankprobe/tokenizer.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rankprobe {

enum class ErrorCategory { LiteralMiss, SemanticMiss, FalsePositive };

std::string_view to_string(ErrorCategory c);
std::optional<ErrorCategory> parse_error_category(std::string_view s);

/// Byte range of a query token found verbatim in the case-folded passage text.
struct TokenSpan {
    std::string token;
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct ErrorRecord {
    std::string query_id;
    std::string passage_id;
    RelevanceGrade grade;
    QueryType qtype = QueryType::SingletonObject;
    /// 1-based rank in the evaluated run; absent when the passage is not listed at all.
    std::optional<std::size_t> rank_in_run;
    std::optional<double> score;
    ErrorCategory category = ErrorCategory::SemanticMiss;
    std::vector<TokenSpan> evidence;
};

enum class LiteralCriterion {
    /// Query tokens occur verbatim in the passage (all of them, or at least min_overlap).
    Containment,
    /// The lexical run ranks the passage within the top k for the query.
    Bm25Recall,
};

struct LiteralOptions {
    LiteralCriterion criterion = LiteralCriterion::Bm25Recall;
    /// Containment threshold; unset means every query token must occur.
    std::optional<std::size_t> min_overlap;
    /// Lexical run for Bm25Recall. When null, a default BM25 run is built with `tokenizer`.
    const Run* lexical_run = nullptr;
};

/// Every grade >= 1 passage outside the run's top k, classified as LiteralMiss or
/// SemanticMiss. Zero-positive queries contribute nothing; queries absent from the
/// run have all positives missed. Records are ordered by query id, then passage id.
std::vector<ErrorRecord> false_negatives(const Run& run, const Dataset& d, std::size_t k, const Tokenizer& tokenizer,
                                         const LiteralOptions& opts = {});

/// Grade-0 passages inside the top k that rank above at least one grade >= 1 passage
/// (a positive outside the top k counts as ranked below). Ordered by query id, then rank.
std::vector<ErrorRecord> false_positives(const Run& run, const Dataset& d, std::size_t k);

/// Verbatim matches of each query token in the case-folded passage text.
std::vector<TokenSpan> find_token_spans(const std::vector<std::string>& query_tokens, std::string_view passage_text);

/// One JSON object per record, with query and passage text attached for review.
void write_worksheet(const std::vector<ErrorRecord>& records, const Dataset& d, std::ostream& out);

} // namespace rankprobe
