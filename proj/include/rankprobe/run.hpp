#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rankprobe {

struct ScoredPassage {
    std::string passage_id;
    double score = 0.0;

    friend bool operator==(const ScoredPassage&, const ScoredPassage&) = default;
};

/// Orders by descending score, then ascending passage id.
[[nodiscard]] inline bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.passage_id < b.passage_id;
}

struct RankedList {
    std::string query_id;
    std::vector<ScoredPassage> entries;

    /// 1-based rank of a passage, 0 when absent.
    [[nodiscard]] std::size_t rank_of(const std::string& passage_id) const;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

struct Run {
    std::string name;
    std::map<std::string, RankedList> lists;
    /// Provider, model, instruction, k, timestamps. Written to the sidecar, not the run file.
    std::map<std::string, std::string> metadata;

    [[nodiscard]] const RankedList* find(const std::string& query_id) const;
};

/// Six-column ranked-run lines: `query_id Q0 passage_id rank score run_name`.
/// Queries in ascending id order; ids must not contain whitespace.
void write_run(const Run& run, std::ostream& out);
void write_run(const Run& run, const std::filesystem::path& path);
/// Entries are ordered by the rank column; the run name is taken from the first line.
Run read_run(const std::filesystem::path& path);

} // namespace rankprobe
