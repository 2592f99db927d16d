#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/llm_client.hpp"
#include "rankprobe/tokenizer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rankprobe {

/// SM: overall summaries and long questions. KW: salient keywords, hypernyms, short phrases.
enum class QueryKind : std::uint8_t { SM, KW };

std::string_view to_string(QueryKind k);
std::optional<QueryKind> parse_query_kind(std::string_view s);

struct GeneratedQuery {
    std::string passage_id;
    QueryKind kind = QueryKind::KW;
    std::string text;

    friend bool operator==(const GeneratedQuery&, const GeneratedQuery&) = default;
};

struct GenConfig {
    std::vector<QueryKind> kinds{QueryKind::SM, QueryKind::KW};
    std::string model;
    double temperature = 0.7;
    std::size_t max_per_kind = 20;
    std::string sm_template = "sm_v1";
    std::string kw_template = "kw_v1";
    std::size_t concurrency = 4;
    /// Extra attempts after a response that yields no list items.
    unsigned parse_retries = 2;
    double leakage_threshold = 0.6;

    /// std::invalid_argument unless threshold in (0, 1], max_per_kind >= 1, concurrency >= 1.
    void validate() const;
};

struct PromptTemplate {
    std::string id;
    std::string system;
    /// `{passage}` and `{max}` are substituted.
    std::string user;

    [[nodiscard]] std::string render_user(std::string_view passage, std::size_t max_items) const;
};

/// Template text format: leading `#` comment lines, then a `[system]` section and a
/// `[user]` section. ParseError when either section is missing.
PromptTemplate parse_prompt_template(std::string id, std::string_view source);

class PromptLibrary {
  public:
    /// The templates shipped in prompts/, compiled in.
    static PromptLibrary builtin();
    /// Every `*.txt` in `dir`, keyed by file stem, layered over the built-ins.
    static PromptLibrary with_directory(const std::filesystem::path& dir);

    /// LookupError for unknown ids.
    [[nodiscard]] const PromptTemplate& get(const std::string& id) const;
    void add(PromptTemplate t);

  private:
    std::map<std::string, PromptTemplate> templates_;
};

/// Items of a numbered (`1.`, `1)`, `1、`) or bulleted (`-`, `*`, `•`) list, trimmed and
/// unquoted, in order. Returns nothing when the text holds no list item.
std::vector<std::string> parse_list_response(std::string_view response);

struct GenerationStats {
    std::size_t requests = 0;
    std::size_t parse_failures = 0;
    std::size_t skipped = 0;
    std::size_t duplicates_dropped = 0;
    std::size_t degenerate_dropped = 0;
};

/// One LLM call per (passage, kind), at most cfg.concurrency in flight. Output follows
/// passage order, then cfg.kinds order, then list order; per passage, normalized
/// duplicates and queries equal to the passage text are dropped. Responses with no
/// list items are retried cfg.parse_retries times, then the pair is skipped and
/// counted. TransportError propagates.
std::vector<GeneratedQuery> generate_queries(std::span<const Passage> passages, const GenConfig& cfg,
                                             const LlmClient& client, const PromptLibrary& prompts,
                                             GenerationStats* stats = nullptr);

/// Length of the longest common subsequence of two code point strings
/// (bit-parallel, O(|a| * ceil(|b| / 64))).
std::size_t lcs_length(std::u32string_view a, std::u32string_view b);

/// Character-level ROUGE-L F1 with P = LCS/|candidate|, R = LCS/|reference|;
/// 0 when either side is empty.
double rouge_l_f1(std::string_view candidate, std::string_view reference);

struct LeakageResult {
    std::vector<Passage> kept;
    std::vector<Passage> dropped;
    /// Highest F1 against any test passage, parallel to `dropped`.
    std::vector<double> dropped_scores;
};

/// Drops every training passage whose ROUGE-L F1 against some test passage exceeds
/// `threshold` (strictly). Input order is preserved in both outputs.
LeakageResult filter_leakage(std::span<const Passage> train, std::span<const Passage> test, double threshold,
                             std::size_t jobs = 0);

struct HoldoutSplit {
    std::vector<GeneratedQuery> train;
    std::vector<GeneratedQuery> holdout;
};

/// Seeded split stratified by kind. The holdout holds round(fraction * N) queries,
/// each kind within one query of fraction * n_kind; both sides keep input order.
/// std::invalid_argument unless 0 < fraction < 1.
HoldoutSplit split_holdout(std::span<const GeneratedQuery> queries, double fraction, std::uint64_t seed);

inline constexpr std::uint64_t kDefaultSeed = 20240601;

struct TrainingExample {
    std::string query;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    std::string passage_id;
    std::optional<QueryKind> kind;

    friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

/// Writes one JSON line per query:
///   {"query": str, "positives": [source passage text], "negatives": [], "passage_id": str, "kind": "SM"|"KW"}
/// in input order and returns the number written. Queries identical to their passage
/// text are skipped. IntegrityError for a passage id that does not resolve.
std::size_t export_training(std::span<const GeneratedQuery> queries, std::span<const Passage> passages,
                            const std::filesystem::path& path);
/// ParseError on schema violations (missing query, empty positives).
std::vector<TrainingExample> read_training(const std::filesystem::path& path);

void write_generated(std::span<const GeneratedQuery> queries, const std::filesystem::path& path);
std::vector<GeneratedQuery> read_generated(const std::filesystem::path& path);

struct GenStatsRow {
    QueryKind kind = QueryKind::KW;
    std::size_t passages = 0;
    std::size_t passage_tokens = 0;
    std::size_t queries = 0;
    double queries_per_passage = 0.0;
    double tokens_per_query = 0.0;
};

/// One row per kind present in `queries`; queries per passage is taken over all of `passages`.
std::vector<GenStatsRow> gen_stats(std::span<const GeneratedQuery> queries, std::span<const Passage> passages,
                                   const Tokenizer& tokenizer);

} // namespace rankprobe
