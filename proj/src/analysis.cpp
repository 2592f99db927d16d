#include "rankprobe/analysis.hpp"

#include "rankprobe/lexical.hpp"
#include "rankprobe/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <memory>
#include <ostream>
#include <unordered_set>

namespace rankprobe {

std::string_view to_string(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::LiteralMiss:
        return "LiteralMiss";
    case ErrorCategory::SemanticMiss:
        return "SemanticMiss";
    case ErrorCategory::FalsePositive:
        return "FalsePositive";
    }
    return "?";
}

std::optional<ErrorCategory> parse_error_category(std::string_view s) {
    const std::string key = text::casefold(text::trim(s));
    for (auto c : {ErrorCategory::LiteralMiss, ErrorCategory::SemanticMiss, ErrorCategory::FalsePositive}) {
        if (text::casefold(to_string(c)) == key) return c;
    }
    if (key == "literal") return ErrorCategory::LiteralMiss;
    if (key == "semantic") return ErrorCategory::SemanticMiss;
    if (key == "fp") return ErrorCategory::FalsePositive;
    return std::nullopt;
}

std::vector<TokenSpan> find_token_spans(const std::vector<std::string>& query_tokens, std::string_view passage_text) {
    const std::string folded = text::casefold(passage_text);
    std::vector<TokenSpan> spans;
    std::unordered_set<std::string_view> done;
    for (const auto& tok : query_tokens) {
        if (tok.empty() || !done.insert(tok).second) continue;
        for (auto pos = folded.find(tok); pos != std::string::npos; pos = folded.find(tok, pos + tok.size())) {
            spans.push_back({tok, pos, pos + tok.size()});
        }
    }
    std::sort(spans.begin(), spans.end(), [](const TokenSpan& a, const TokenSpan& b) {
        return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
    });
    return spans;
}

std::vector<ErrorRecord> false_negatives(const Run& run, const Dataset& d, std::size_t k, const Tokenizer& tokenizer,
                                         const LiteralOptions& opts) {
    const Run* lexical = opts.lexical_run;
    std::unique_ptr<Run> owned;
    if (opts.criterion == LiteralCriterion::Bm25Recall && !lexical) {
        owned = std::make_unique<Run>(bm25_run(d, tokenizer, k));
        lexical = owned.get();
    }

    std::vector<const Query*> queries;
    for (const auto& q : d.queries()) queries.push_back(&q);
    std::sort(queries.begin(), queries.end(), [](const Query* a, const Query* b) { return a->id < b->id; });

    std::vector<ErrorRecord> out;
    for (const Query* q : queries) {
        const auto& row = d.labels().row(q->id);
        if (row.empty()) continue;
        const RankedList* list = run.find(q->id);
        const RankedList* lex = lexical ? lexical->find(q->id) : nullptr;
        const auto qtokens = tokenizer.tokenize(q->text);
        std::unordered_set<std::string> distinct(qtokens.begin(), qtokens.end());

        std::vector<std::string> pids;
        for (const auto& [pid, g] : row) pids.push_back(pid);
        std::sort(pids.begin(), pids.end());
        for (const auto& pid : pids) {
            const std::size_t rank = list ? list->rank_of(pid) : 0;
            if (rank != 0 && rank <= k) continue;

            ErrorRecord rec;
            rec.query_id = q->id;
            rec.passage_id = pid;
            rec.grade = row.at(pid);
            rec.qtype = q->qtype;
            if (rank != 0) {
                rec.rank_in_run = rank;
                rec.score = list->entries[rank - 1].score;
            }
            rec.evidence = find_token_spans(qtokens, d.passage(pid).text);

            bool literal = false;
            if (opts.criterion == LiteralCriterion::Containment) {
                std::unordered_set<std::string> matched;
                for (const auto& s : rec.evidence) matched.insert(s.token);
                const std::size_t need = opts.min_overlap.value_or(distinct.size());
                literal = !distinct.empty() && need > 0 && matched.size() >= std::min(need, distinct.size());
            } else {
                const std::size_t lrank = lex ? lex->rank_of(pid) : 0;
                literal = lrank != 0 && lrank <= k;
            }
            rec.category = literal ? ErrorCategory::LiteralMiss : ErrorCategory::SemanticMiss;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<ErrorRecord> false_positives(const Run& run, const Dataset& d, std::size_t k) {
    std::vector<const Query*> queries;
    for (const auto& q : d.queries()) queries.push_back(&q);
    std::sort(queries.begin(), queries.end(), [](const Query* a, const Query* b) { return a->id < b->id; });

    std::vector<ErrorRecord> out;
    for (const Query* q : queries) {
        const auto& row = d.labels().row(q->id);
        if (row.empty()) continue;
        const RankedList* list = run.find(q->id);
        if (!list) continue;
        std::size_t positives_above = 0;
        const std::size_t depth = std::min(k, list->entries.size());
        for (std::size_t i = 0; i < depth; ++i) {
            const auto& e = list->entries[i];
            const auto it = row.find(e.passage_id);
            if (it != row.end()) {
                ++positives_above;
                continue;
            }
            if (positives_above == row.size()) break;
            ErrorRecord rec;
            rec.query_id = q->id;
            rec.passage_id = e.passage_id;
            rec.grade = RelevanceGrade::none();
            rec.qtype = q->qtype;
            rec.rank_in_run = i + 1;
            rec.score = e.score;
            rec.category = ErrorCategory::FalsePositive;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

void write_worksheet(const std::vector<ErrorRecord>& records, const Dataset& d, std::ostream& out) {
    using nlohmann::json;
    for (const auto& r : records) {
        json evidence = json::array();
        for (const auto& s : r.evidence) evidence.push_back({{"token", s.token}, {"begin", s.begin}, {"end", s.end}});
        json obj{{"category", to_string(r.category)},
                 {"query_id", r.query_id},
                 {"qtype", to_string(r.qtype)},
                 {"query", d.has_query(r.query_id) ? d.query(r.query_id).text : ""},
                 {"passage_id", r.passage_id},
                 {"passage", d.has_passage(r.passage_id) ? d.passage(r.passage_id).text : ""},
                 {"grade", r.grade.value()},
                 {"rank", r.rank_in_run ? json(*r.rank_in_run) : json(nullptr)},
                 {"score", r.score ? json(*r.score) : json(nullptr)},
                 {"evidence", std::move(evidence)}};
        out << obj.dump() << '\n';
    }
}

} // namespace rankprobe
