#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rankprobe {

class Tokenizer;

struct Passage {
    std::string id;
    std::string text;

    friend bool operator==(const Passage&, const Passage&) = default;
};

enum class QueryType : std::uint8_t {
    SingletonPerson,
    SingletonPlace,
    SingletonObject,
    SingletonConcept,
    SingletonEvent,
    Conjunction,
    SimpleCondition,
    ComplexCondition,
};

inline constexpr std::array<QueryType, 8> kAllQueryTypes = {
    QueryType::SingletonPerson, QueryType::SingletonPlace,  QueryType::SingletonObject,
    QueryType::SingletonConcept, QueryType::SingletonEvent, QueryType::Conjunction,
    QueryType::SimpleCondition, QueryType::ComplexCondition,
};

std::string_view to_string(QueryType t);
/// Case-insensitive; '_', '-' and spaces are ignored, so "simple_condition" parses.
std::optional<QueryType> parse_query_type(std::string_view s);

/// Coarse grouping where the four entity types collapse into SingletonEntity.
enum class QueryGroup : std::uint8_t {
    SingletonEntity,
    SingletonEvent,
    Conjunction,
    SimpleCondition,
    ComplexCondition,
};

inline constexpr std::array<QueryGroup, 5> kAllQueryGroups = {
    QueryGroup::SingletonEntity, QueryGroup::SingletonEvent, QueryGroup::Conjunction,
    QueryGroup::SimpleCondition, QueryGroup::ComplexCondition,
};

[[nodiscard]] QueryGroup coarse_group(QueryType t) noexcept;
[[nodiscard]] inline bool is_singleton_entity(QueryType t) noexcept {
    return coarse_group(t) == QueryGroup::SingletonEntity;
}
std::string_view to_string(QueryGroup g);

struct Query {
    std::string id;
    std::string text;
    QueryType qtype = QueryType::SingletonObject;

    friend bool operator==(const Query&, const Query&) = default;
};

/// Relevance label: 0 (none), 1 (weak) or 2 (strong). No other value is constructible.
class RelevanceGrade {
  public:
    constexpr RelevanceGrade() noexcept = default;

    static constexpr RelevanceGrade none() noexcept { return RelevanceGrade(0); }
    static constexpr RelevanceGrade weak() noexcept { return RelevanceGrade(1); }
    static constexpr RelevanceGrade strong() noexcept { return RelevanceGrade(2); }
    static constexpr std::optional<RelevanceGrade> from_int(long long v) noexcept {
        if (v < 0 || v > 2) return std::nullopt;
        return RelevanceGrade(static_cast<std::uint8_t>(v));
    }

    [[nodiscard]] constexpr int value() const noexcept { return value_; }
    [[nodiscard]] constexpr bool relevant() const noexcept { return value_ > 0; }

    friend constexpr auto operator<=>(RelevanceGrade, RelevanceGrade) = default;

  private:
    constexpr explicit RelevanceGrade(std::uint8_t v) noexcept : value_(v) {}
    std::uint8_t value_ = 0;
};

/// Sparse storage of a logically complete grade matrix: only nonzero grades are kept,
/// every other pair reads as grade 0.
class LabelMatrix {
  public:
    using Row = std::unordered_map<std::string, RelevanceGrade>;

    /// Setting grade 0 erases the pair.
    void set(const std::string& query_id, const std::string& passage_id, RelevanceGrade g);
    [[nodiscard]] RelevanceGrade get(const std::string& query_id, const std::string& passage_id) const;
    /// Nonzero grades of one query; empty when it has none.
    [[nodiscard]] const Row& row(const std::string& query_id) const;

    [[nodiscard]] std::size_t nonzero_count() const noexcept { return nonzero_; }
    [[nodiscard]] const std::unordered_map<std::string, Row>& rows() const noexcept { return rows_; }

    friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

  private:
    std::unordered_map<std::string, Row> rows_;
    std::size_t nonzero_ = 0;
};

/// Validated, immutable retrieval dataset.
class Dataset {
  public:
    /// Throws DuplicateIdError on repeated passage or query ids, IntegrityError on
    /// empty ids/texts or label keys that reference unknown ids.
    static Dataset create(std::string name, std::vector<Passage> passages, std::vector<Query> queries,
                          LabelMatrix labels);

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] const std::vector<Passage>& passages() const noexcept { return passages_; }
    [[nodiscard]] const std::vector<Query>& queries() const noexcept { return queries_; }
    [[nodiscard]] const LabelMatrix& labels() const noexcept { return labels_; }

    [[nodiscard]] bool has_passage(const std::string& id) const { return passage_index_.contains(id); }
    [[nodiscard]] bool has_query(const std::string& id) const { return query_index_.contains(id); }
    /// LookupError for ids outside the dataset.
    [[nodiscard]] const Passage& passage(const std::string& id) const;
    [[nodiscard]] const Query& query(const std::string& id) const;
    [[nodiscard]] RelevanceGrade grade(const std::string& query_id, const std::string& passage_id) const;

    [[nodiscard]] std::size_t positive_count() const noexcept { return labels_.nonzero_count(); }
    [[nodiscard]] std::size_t positives_for(const std::string& query_id) const {
        return labels_.row(query_id).size();
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.name_ == b.name_ && a.passages_ == b.passages_ && a.queries_ == b.queries_ &&
               a.labels_ == b.labels_;
    }

  private:
    Dataset() = default;

    std::string name_;
    std::vector<Passage> passages_;
    std::vector<Query> queries_;
    LabelMatrix labels_;
    std::unordered_map<std::string, std::size_t> passage_index_;
    std::unordered_map<std::string, std::size_t> query_index_;
};

struct DatasetPaths {
    std::filesystem::path passages;
    std::filesystem::path queries;
    std::filesystem::path labels;

    /// `<dir>/passages.tsv`, `<dir>/queries.tsv`, `<dir>/labels.tsv`.
    static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Loads the three tab-separated files. The dataset name defaults to the parent
/// directory name of the passages file.
Dataset load_dataset(const DatasetPaths& paths, std::optional<std::string> name = std::nullopt);
/// Writes the canonical tab-separated form: records in dataset order, labels sorted
/// by (query id, passage id), zero grades omitted.
void save_dataset(const Dataset& d, const DatasetPaths& paths);

/// Reads a standalone `id \t text` passage file (e.g. a training pool).
/// DuplicateIdError / IntegrityError as for datasets.
std::vector<Passage> load_passages(const std::filesystem::path& path);
void save_passages(const std::vector<Passage>& passages, const std::filesystem::path& path);

/// Single-file variant: one JSON object per line. Passages carry id/text, queries
/// id/text/qtype, labels query_id/passage_id/grade; an optional "type" field
/// ("passage" | "query" | "label") overrides field-based detection.
Dataset load_dataset_jsonl(const std::filesystem::path& path, std::optional<std::string> name = std::nullopt);
void save_dataset_jsonl(const Dataset& d, const std::filesystem::path& path);

struct TokenStats {
    std::size_t min = 0;
    std::size_t max = 0;
    double mean = 0.0;
};

struct StatsReport {
    std::string tokenizer;
    std::size_t passages = 0;
    std::size_t queries = 0;
    TokenStats passage_tokens;
    TokenStats query_tokens;
    std::size_t positive_pairs = 0;
    std::size_t strong_pairs = 0;
    std::size_t weak_pairs = 0;
    /// positives per query → number of queries.
    std::map<std::size_t, std::size_t> positives_histogram;
    std::map<QueryType, std::size_t> queries_by_type;
};

StatsReport dataset_stats(const Dataset& d, const Tokenizer& tokenizer);

/// Queries without any grade >= 1 passage, ascending by id.
std::vector<std::string> zero_positive_queries(const Dataset& d);

} // namespace rankprobe
