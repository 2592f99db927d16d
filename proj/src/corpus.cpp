#include "rankprobe/corpus.hpp"

#include "rankprobe/error.hpp"
#include "rankprobe/text.hpp"
#include "rankprobe/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <unordered_set>

namespace rankprobe {
namespace {

constexpr std::array<std::string_view, 8> kQueryTypeNames = {
    "SingletonPerson", "SingletonPlace", "SingletonObject",  "SingletonConcept",
    "SingletonEvent",  "Conjunction",    "SimpleCondition", "ComplexCondition",
};

std::string squash(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '_' || c == '-' || c == ' ') continue;
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c);
    }
    return out;
}

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view(line);
        if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        if (text::trim(view).empty()) continue;
        fn(view, lineno);
    }
}

RelevanceGrade parse_grade(std::string_view s, const std::string& source, std::size_t lineno) {
    s = text::trim(s);
    long long v = -1;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(source, lineno, "grade '" + std::string(s) + "' is not an integer");
    }
    const auto g = RelevanceGrade::from_int(v);
    if (!g) throw ParseError(source, lineno, "grade " + std::to_string(v) + " outside {0,1,2}");
    return *g;
}

void add_label(LabelMatrix& labels, std::unordered_set<std::string>& seen, const std::string& qid,
               const std::string& pid, RelevanceGrade g, const std::string& source, std::size_t lineno) {
    std::string key = qid;
    key.push_back('\t');
    key += pid;
    if (!seen.insert(std::move(key)).second) {
        throw ParseError(source, lineno, "duplicate label for (" + qid + ", " + pid + ")");
    }
    labels.set(qid, pid, g);
}

void check_field(std::string_view value, std::string_view what, const std::string& id) {
    if (value.find_first_of("\t\n\r") != std::string_view::npos) {
        throw IntegrityError(std::string(what) + " of '" + id + "' contains a tab or newline");
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::vector<std::pair<std::string, std::string>> sorted_label_keys(const LabelMatrix& labels) {
    std::vector<std::pair<std::string, std::string>> keys;
    keys.reserve(labels.nonzero_count());
    for (const auto& [qid, row] : labels.rows()) {
        for (const auto& [pid, g] : row) keys.emplace_back(qid, pid);
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::string default_name(const std::filesystem::path& p) {
    const auto parent = std::filesystem::absolute(p).lexically_normal().parent_path().filename().string();
    return parent.empty() ? p.stem().string() : parent;
}

TokenStats token_stats(const std::vector<std::size_t>& counts) {
    TokenStats s;
    if (counts.empty()) return s;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    s.min = *lo;
    s.max = *hi;
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    s.mean = total / static_cast<double>(counts.size());
    return s;
}

} // namespace

std::string_view to_string(QueryType t) { return kQueryTypeNames.at(static_cast<std::size_t>(t)); }

std::optional<QueryType> parse_query_type(std::string_view s) {
    const std::string key = squash(text::trim(s));
    for (std::size_t i = 0; i < kQueryTypeNames.size(); ++i) {
        if (squash(kQueryTypeNames[i]) == key) return kAllQueryTypes[i];
    }
    return std::nullopt;
}

QueryGroup coarse_group(QueryType t) noexcept {
    switch (t) {
    case QueryType::SingletonPerson:
    case QueryType::SingletonPlace:
    case QueryType::SingletonObject:
    case QueryType::SingletonConcept:
        return QueryGroup::SingletonEntity;
    case QueryType::SingletonEvent:
        return QueryGroup::SingletonEvent;
    case QueryType::Conjunction:
        return QueryGroup::Conjunction;
    case QueryType::SimpleCondition:
        return QueryGroup::SimpleCondition;
    case QueryType::ComplexCondition:
        return QueryGroup::ComplexCondition;
    }
    return QueryGroup::SingletonEntity;
}

std::string_view to_string(QueryGroup g) {
    switch (g) {
    case QueryGroup::SingletonEntity:
        return "SingletonEntity";
    case QueryGroup::SingletonEvent:
        return "SingletonEvent";
    case QueryGroup::Conjunction:
        return "Conjunction";
    case QueryGroup::SimpleCondition:
        return "SimpleCondition";
    case QueryGroup::ComplexCondition:
        return "ComplexCondition";
    }
    return "?";
}

void LabelMatrix::set(const std::string& query_id, const std::string& passage_id, RelevanceGrade g) {
    auto& row = rows_[query_id];
    const auto it = row.find(passage_id);
    if (!g.relevant()) {
        if (it != row.end()) {
            row.erase(it);
            --nonzero_;
        }
        if (row.empty()) rows_.erase(query_id);
        return;
    }
    if (it == row.end()) {
        row.emplace(passage_id, g);
        ++nonzero_;
    } else {
        it->second = g;
    }
}

RelevanceGrade LabelMatrix::get(const std::string& query_id, const std::string& passage_id) const {
    const auto rit = rows_.find(query_id);
    if (rit == rows_.end()) return RelevanceGrade::none();
    const auto it = rit->second.find(passage_id);
    return it == rit->second.end() ? RelevanceGrade::none() : it->second;
}

const LabelMatrix::Row& LabelMatrix::row(const std::string& query_id) const {
    static const Row empty;
    const auto it = rows_.find(query_id);
    return it == rows_.end() ? empty : it->second;
}

Dataset Dataset::create(std::string name, std::vector<Passage> passages, std::vector<Query> queries,
                        LabelMatrix labels) {
    Dataset d;
    d.name_ = std::move(name);
    d.passage_index_.reserve(passages.size());
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const auto& p = passages[i];
        if (p.id.empty()) throw IntegrityError("passage #" + std::to_string(i + 1) + " has an empty id");
        if (p.text.empty()) throw IntegrityError("passage '" + p.id + "' has empty text");
        if (!d.passage_index_.emplace(p.id, i).second) throw DuplicateIdError("duplicate passage id '" + p.id + "'");
    }
    d.query_index_.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        if (q.id.empty()) throw IntegrityError("query #" + std::to_string(i + 1) + " has an empty id");
        if (q.text.empty()) throw IntegrityError("query '" + q.id + "' has empty text");
        if (!d.query_index_.emplace(q.id, i).second) throw DuplicateIdError("duplicate query id '" + q.id + "'");
    }
    for (const auto& [qid, row] : labels.rows()) {
        if (!d.query_index_.contains(qid)) throw IntegrityError("label references unknown query id '" + qid + "'");
        for (const auto& [pid, g] : row) {
            if (!d.passage_index_.contains(pid)) {
                throw IntegrityError("label (" + qid + ", " + pid + ") references unknown passage id '" + pid + "'");
            }
        }
    }
    d.passages_ = std::move(passages);
    d.queries_ = std::move(queries);
    d.labels_ = std::move(labels);
    return d;
}

const Passage& Dataset::passage(const std::string& id) const {
    const auto it = passage_index_.find(id);
    if (it == passage_index_.end()) throw LookupError("unknown passage id '" + id + "'");
    return passages_[it->second];
}

const Query& Dataset::query(const std::string& id) const {
    const auto it = query_index_.find(id);
    if (it == query_index_.end()) throw LookupError("unknown query id '" + id + "'");
    return queries_[it->second];
}

RelevanceGrade Dataset::grade(const std::string& query_id, const std::string& passage_id) const {
    if (!has_query(query_id)) throw LookupError("unknown query id '" + query_id + "'");
    if (!has_passage(passage_id)) throw LookupError("unknown passage id '" + passage_id + "'");
    return labels_.get(query_id, passage_id);
}

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
    return {dir / "passages.tsv", dir / "queries.tsv", dir / "labels.tsv"};
}

namespace {

std::vector<Passage> read_passage_lines(const std::filesystem::path& path) {
    std::vector<Passage> passages;
    const std::string psrc = path.string();
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        const auto f = text::split(line, '\t');
        if (f.size() != 2) throw ParseError(psrc, n, "expected 2 tab-separated fields, got " + std::to_string(f.size()));
        passages.push_back({std::string(text::trim(f[0])), std::string(f[1])});
    });
    return passages;
}

} // namespace

std::vector<Passage> load_passages(const std::filesystem::path& path) {
    auto passages = read_passage_lines(path);
    // Validation only; the dataset itself is discarded.
    auto checked = Dataset::create(path.stem().string(), std::move(passages), {}, {});
    return checked.passages();
}

void save_passages(const std::vector<Passage>& passages, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (const auto& p : passages) {
        check_field(p.id, "id", p.id);
        check_field(p.text, "text", p.id);
        out << p.id << '\t' << p.text << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const DatasetPaths& paths, std::optional<std::string> name) {
    std::vector<Passage> passages = read_passage_lines(paths.passages);

    std::vector<Query> queries;
    const std::string qsrc = paths.queries.string();
    for_each_line(paths.queries, [&](std::string_view line, std::size_t n) {
        const auto f = text::split(line, '\t');
        if (f.size() != 3) throw ParseError(qsrc, n, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
        const auto qtype = parse_query_type(f[2]);
        if (!qtype) throw ParseError(qsrc, n, "unknown query type '" + std::string(f[2]) + "'");
        queries.push_back({std::string(text::trim(f[0])), std::string(f[1]), *qtype});
    });

    LabelMatrix labels;
    std::unordered_set<std::string> seen;
    const std::string lsrc = paths.labels.string();
    for_each_line(paths.labels, [&](std::string_view line, std::size_t n) {
        const auto f = text::split(line, '\t');
        if (f.size() != 3) throw ParseError(lsrc, n, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
        add_label(labels, seen, std::string(text::trim(f[0])), std::string(text::trim(f[1])), parse_grade(f[2], lsrc, n),
                  lsrc, n);
    });

    return Dataset::create(name.value_or(default_name(paths.passages)), std::move(passages), std::move(queries),
                           std::move(labels));
}

void save_dataset(const Dataset& d, const DatasetPaths& paths) {
    auto pout = open_out(paths.passages);
    for (const auto& p : d.passages()) {
        check_field(p.id, "id", p.id);
        check_field(p.text, "text", p.id);
        pout << p.id << '\t' << p.text << '\n';
    }
    auto qout = open_out(paths.queries);
    for (const auto& q : d.queries()) {
        check_field(q.id, "id", q.id);
        check_field(q.text, "text", q.id);
        qout << q.id << '\t' << q.text << '\t' << to_string(q.qtype) << '\n';
    }
    auto lout = open_out(paths.labels);
    for (const auto& [qid, pid] : sorted_label_keys(d.labels())) {
        lout << qid << '\t' << pid << '\t' << d.labels().get(qid, pid).value() << '\n';
    }
    if (!pout || !qout || !lout) throw IoError("write failed for dataset " + d.name());
}

Dataset load_dataset_jsonl(const std::filesystem::path& path, std::optional<std::string> name) {
    using nlohmann::json;
    std::vector<Passage> passages;
    std::vector<Query> queries;
    LabelMatrix labels;
    std::unordered_set<std::string> seen;
    const std::string src = path.string();

    auto str_field = [&](const json& obj, const char* key, std::size_t n) {
        const auto it = obj.find(key);
        if (it == obj.end() || !it->is_string()) {
            throw ParseError(src, n, std::string("missing string field '") + key + "'");
        }
        return it->get<std::string>();
    };

    for_each_line(path, [&](std::string_view line, std::size_t n) {
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(src, n, e.what());
        }
        if (!obj.is_object()) throw ParseError(src, n, "expected a JSON object");
        std::string kind;
        if (const auto it = obj.find("type"); it != obj.end() && it->is_string()) {
            kind = it->get<std::string>();
        } else if (obj.contains("grade")) {
            kind = "label";
        } else if (obj.contains("qtype")) {
            kind = "query";
        } else {
            kind = "passage";
        }

        if (kind == "passage") {
            passages.push_back({str_field(obj, "id", n), str_field(obj, "text", n)});
        } else if (kind == "query") {
            const auto qt = str_field(obj, "qtype", n);
            const auto qtype = parse_query_type(qt);
            if (!qtype) throw ParseError(src, n, "unknown query type '" + qt + "'");
            queries.push_back({str_field(obj, "id", n), str_field(obj, "text", n), *qtype});
        } else if (kind == "label") {
            const auto& g = obj.at("grade");
            RelevanceGrade grade;
            if (g.is_number_integer()) {
                const auto v = RelevanceGrade::from_int(g.get<long long>());
                if (!v) throw ParseError(src, n, "grade outside {0,1,2}");
                grade = *v;
            } else if (g.is_string()) {
                grade = parse_grade(g.get<std::string>(), src, n);
            } else {
                throw ParseError(src, n, "grade must be an integer");
            }
            add_label(labels, seen, str_field(obj, "query_id", n), str_field(obj, "passage_id", n), grade, src, n);
        } else {
            throw ParseError(src, n, "unknown record type '" + kind + "'");
        }
    });
    return Dataset::create(name.value_or(path.stem().string()), std::move(passages), std::move(queries),
                           std::move(labels));
}

void save_dataset_jsonl(const Dataset& d, const std::filesystem::path& path) {
    using nlohmann::json;
    auto out = open_out(path);
    for (const auto& p : d.passages()) {
        out << json{{"type", "passage"}, {"id", p.id}, {"text", p.text}}.dump() << '\n';
    }
    for (const auto& q : d.queries()) {
        out << json{{"type", "query"}, {"id", q.id}, {"text", q.text}, {"qtype", to_string(q.qtype)}}.dump() << '\n';
    }
    for (const auto& [qid, pid] : sorted_label_keys(d.labels())) {
        out << json{{"type", "label"}, {"query_id", qid}, {"passage_id", pid}, {"grade", d.labels().get(qid, pid).value()}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

StatsReport dataset_stats(const Dataset& d, const Tokenizer& tokenizer) {
    StatsReport r;
    r.tokenizer = tokenizer.name();
    r.passages = d.passages().size();
    r.queries = d.queries().size();

    std::vector<std::size_t> counts;
    counts.reserve(d.passages().size());
    for (const auto& p : d.passages()) counts.push_back(tokenizer.tokenize(p.text).size());
    r.passage_tokens = token_stats(counts);

    counts.clear();
    for (const auto& q : d.queries()) {
        counts.push_back(tokenizer.tokenize(q.text).size());
        ++r.queries_by_type[q.qtype];
        const auto& row = d.labels().row(q.id);
        ++r.positives_histogram[row.size()];
        for (const auto& [pid, g] : row) {
            (g == RelevanceGrade::strong() ? r.strong_pairs : r.weak_pairs) += 1;
        }
    }
    r.query_tokens = token_stats(counts);
    r.positive_pairs = d.positive_count();
    return r;
}

std::vector<std::string> zero_positive_queries(const Dataset& d) {
    std::vector<std::string> ids;
    for (const auto& q : d.queries()) {
        if (d.labels().row(q.id).empty()) ids.push_back(q.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace rankprobe
