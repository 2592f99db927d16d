#include "rankprobe/datagen.hpp"

#include "rankprobe/error.hpp"
#include "rankprobe/parallel.hpp"
#include "rankprobe/text.hpp"

#include "builtin_prompts.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace rankprobe {
namespace {

std::string substitute(std::string_view tpl, std::string_view passage, std::size_t max_items) {
    std::string out;
    out.reserve(tpl.size() + passage.size());
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl.substr(i).starts_with("{passage}")) {
            out += passage;
            i += 9;
        } else if (tpl.substr(i).starts_with("{max}")) {
            out += std::to_string(max_items);
            i += 5;
        } else {
            out.push_back(tpl[i++]);
        }
    }
    return out;
}

// Strips a list marker; returns the remainder, or nullopt when the line is not an item.
std::optional<std::string_view> strip_marker(std::string_view line) {
    line = text::trim(line);
    if (line.empty()) return std::nullopt;
    std::size_t digits = 0;
    while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
    if (digits > 0) {
        auto rest = line.substr(digits);
        for (std::string_view sep : {".", ")", "、", "．", ":", "："}) {
            if (rest.starts_with(sep)) return text::trim(rest.substr(sep.size()));
        }
        return std::nullopt;
    }
    for (std::string_view bullet : {"- ", "* ", "•"}) {
        if (line.starts_with(bullet)) return text::trim(line.substr(bullet.size()));
    }
    return std::nullopt;
}

std::string_view unquote(std::string_view s) {
    for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"\"", "\""},
                               {"'", "'"},
                               {"“", "”"},
                               {"「", "」"},
                               {"**", "**"}}) {
        if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
            s = text::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
        }
    }
    return s;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

// Query bits for every code point of `reference`, 64 positions per word.
struct MatchMasks {
    std::size_t length = 0;
    std::size_t words = 0;
    std::unordered_map<char32_t, std::vector<std::uint64_t>> masks;

    explicit MatchMasks(std::u32string_view reference)
        : length(reference.size()), words((reference.size() + 63) / 64) {
        for (std::size_t i = 0; i < reference.size(); ++i) {
            auto& m = masks[reference[i]];
            if (m.empty()) m.assign(words, 0);
            m[i / 64] |= std::uint64_t{1} << (i % 64);
        }
    }
};

std::size_t lcs_with_masks(std::u32string_view a, const MatchMasks& mm, std::vector<std::uint64_t>& v) {
    if (a.empty() || mm.length == 0) return 0;
    v.assign(mm.words, ~std::uint64_t{0});
    for (char32_t c : a) {
        const auto it = mm.masks.find(c);
        if (it == mm.masks.end()) continue;
        const auto& m = it->second;
        std::uint64_t carry = 0;
        std::uint64_t borrow = 0;
        for (std::size_t w = 0; w < mm.words; ++w) {
            const std::uint64_t u = v[w] & m[w];
            // sum = v + u + carry
            const std::uint64_t s1 = v[w] + u;
            const std::uint64_t c1 = s1 < v[w] ? 1 : 0;
            const std::uint64_t sum = s1 + carry;
            const std::uint64_t c2 = sum < s1 ? 1 : 0;
            // diff = v - u - borrow
            const std::uint64_t d1 = v[w] - u;
            const std::uint64_t b1 = v[w] < u ? 1 : 0;
            const std::uint64_t diff = d1 - borrow;
            const std::uint64_t b2 = d1 < borrow ? 1 : 0;
            carry = c1 | c2;
            borrow = b1 | b2;
            v[w] = sum | diff;
        }
    }
    std::size_t zeros = 0;
    for (std::size_t w = 0; w < mm.words; ++w) {
        std::uint64_t word = ~v[w];
        const std::size_t bits = (w + 1 == mm.words && mm.length % 64) ? mm.length % 64 : 64;
        if (bits < 64) word &= (std::uint64_t{1} << bits) - 1;
        zeros += static_cast<std::size_t>(std::popcount(word));
    }
    return zeros;
}

double f1_from(std::size_t lcs, std::size_t la, std::size_t lb) {
    if (la == 0 || lb == 0 || lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(la);
    const double r = static_cast<double>(lcs) / static_cast<double>(lb);
    return 2.0 * p * r / (p + r);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        try {
            fn(obj, lineno);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
}

} // namespace

std::string_view to_string(QueryKind k) { return k == QueryKind::SM ? "SM" : "KW"; }

std::optional<QueryKind> parse_query_kind(std::string_view s) {
    const auto key = text::casefold(text::trim(s));
    if (key == "sm") return QueryKind::SM;
    if (key == "kw") return QueryKind::KW;
    return std::nullopt;
}

void GenConfig::validate() const {
    if (!(leakage_threshold > 0.0 && leakage_threshold <= 1.0)) {
        throw std::invalid_argument("leakage threshold must be in (0, 1]");
    }
    if (max_per_kind == 0) throw std::invalid_argument("max queries per kind must be >= 1");
    if (concurrency == 0) throw std::invalid_argument("concurrency must be >= 1");
    if (kinds.empty()) throw std::invalid_argument("at least one query kind is required");
}

std::string PromptTemplate::render_user(std::string_view passage, std::size_t max_items) const {
    return substitute(user, passage, max_items);
}

PromptTemplate parse_prompt_template(std::string id, std::string_view source) {
    PromptTemplate t;
    t.id = std::move(id);
    std::string* section = nullptr;
    bool saw_system = false;
    bool saw_user = false;
    for (auto line : text::split(source, '\n')) {
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const auto trimmed = text::trim(line);
        if (!section && (trimmed.empty() || trimmed.starts_with("#"))) continue;
        if (trimmed == "[system]") {
            section = &t.system;
            saw_system = true;
            continue;
        }
        if (trimmed == "[user]") {
            section = &t.user;
            saw_user = true;
            continue;
        }
        if (!section) throw ParseError("prompt " + t.id, 0, "text before the first section header");
        section->append(line);
        section->push_back('\n');
    }
    if (!saw_system || !saw_user) throw ParseError("prompt " + t.id, 0, "needs [system] and [user] sections");
    t.system = std::string(text::trim(t.system));
    t.user = std::string(text::trim(t.user));
    return t;
}

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    for (const auto& [id, source] : builtin_prompts::kTemplates) lib.add(parse_prompt_template(std::string(id), source));
    return lib;
}

PromptLibrary PromptLibrary::with_directory(const std::filesystem::path& dir) {
    PromptLibrary lib = builtin();
    if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory " + dir.string() + " does not exist");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        const std::string source((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        lib.add(parse_prompt_template(entry.path().stem().string(), source));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(const std::string& id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) throw LookupError("unknown prompt template '" + id + "'");
    return it->second;
}

void PromptLibrary::add(PromptTemplate t) {
    auto id = t.id;
    templates_.insert_or_assign(std::move(id), std::move(t));
}

std::vector<std::string> parse_list_response(std::string_view response) {
    std::vector<std::string> items;
    for (auto line : text::split(response, '\n')) {
        const auto item = strip_marker(line);
        if (!item) continue;
        const auto cleaned = unquote(*item);
        if (!cleaned.empty()) items.emplace_back(cleaned);
    }
    return items;
}

std::vector<GeneratedQuery> generate_queries(std::span<const Passage> passages, const GenConfig& cfg,
                                             const LlmClient& client, const PromptLibrary& prompts,
                                             GenerationStats* stats) {
    cfg.validate();
    struct Task {
        std::size_t passage;
        QueryKind kind;
        std::vector<std::string> items;
        std::size_t requests = 0;
        bool parsed = false;
    };
    std::vector<Task> tasks;
    tasks.reserve(passages.size() * cfg.kinds.size());
    for (std::size_t p = 0; p < passages.size(); ++p) {
        for (auto kind : cfg.kinds) tasks.push_back({p, kind, {}, 0, false});
    }
    const PromptTemplate& sm = prompts.get(cfg.sm_template);
    const PromptTemplate& kw = prompts.get(cfg.kw_template);

    parallel_for(tasks.size(), cfg.concurrency, [&](std::size_t i) {
        Task& task = tasks[i];
        const Passage& passage = passages[task.passage];
        const PromptTemplate& tpl = task.kind == QueryKind::SM ? sm : kw;
        const ChatRequest req{cfg.model, tpl.system, tpl.render_user(passage.text, cfg.max_per_kind), cfg.temperature};
        for (unsigned attempt = 0; attempt <= cfg.parse_retries; ++attempt) {
            ++task.requests;
            auto items = parse_list_response(client.complete(req));
            if (!items.empty()) {
                if (items.size() > cfg.max_per_kind) items.resize(cfg.max_per_kind);
                task.items = std::move(items);
                task.parsed = true;
                return;
            }
        }
        spdlog::warn("passage '{}' ({}): no list items after {} attempts, skipped", passage.id, to_string(task.kind),
                     task.requests);
    });

    GenerationStats local;
    std::vector<GeneratedQuery> out;
    std::unordered_set<std::string> seen;
    std::size_t current = passages.size();
    std::string passage_norm;
    for (auto& task : tasks) {
        local.requests += task.requests;
        if (!task.parsed) {
            local.parse_failures += task.requests;
            ++local.skipped;
            continue;
        }
        local.parse_failures += task.requests - 1;
        const Passage& passage = passages[task.passage];
        if (task.passage != current) {
            current = task.passage;
            seen.clear();
            passage_norm = text::normalize_for_dedup(passage.text);
        }
        for (auto& item : task.items) {
            std::string trimmed(text::trim(item));
            const auto norm = text::normalize_for_dedup(trimmed);
            if (norm == passage_norm) {
                ++local.degenerate_dropped;
                continue;
            }
            if (!seen.insert(norm).second) {
                ++local.duplicates_dropped;
                continue;
            }
            out.push_back({passage.id, task.kind, std::move(trimmed)});
        }
    }
    if (stats) *stats = local;
    return out;
}

std::size_t lcs_length(std::u32string_view a, std::u32string_view b) {
    const MatchMasks mm(b);
    std::vector<std::uint64_t> v;
    return lcs_with_masks(a, mm, v);
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
    const auto a = text::to_codepoints(candidate);
    const auto b = text::to_codepoints(reference);
    return f1_from(lcs_length(a, b), a.size(), b.size());
}

LeakageResult filter_leakage(std::span<const Passage> train, std::span<const Passage> test, double threshold,
                             std::size_t jobs) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("leakage threshold must be in (0, 1]");

    struct Reference {
        std::size_t length;
        MatchMasks masks;
    };
    std::vector<Reference> refs;
    refs.reserve(test.size());
    for (const auto& p : test) {
        const auto cps = text::to_codepoints(p.text);
        refs.push_back({cps.size(), MatchMasks(cps)});
    }

    std::vector<double> best(train.size(), 0.0);
    parallel_for(train.size(), jobs, [&](std::size_t i) {
        const auto cand = text::to_codepoints(train[i].text);
        const std::size_t la = cand.size();
        std::vector<std::uint64_t> scratch;
        double top = 0.0;
        for (const auto& ref : refs) {
            const std::size_t lb = ref.length;
            // F1 <= 2 min(la, lb) / (la + lb); skip pairs that cannot exceed the threshold.
            if (la + lb == 0 || 2.0 * static_cast<double>(std::min(la, lb)) / static_cast<double>(la + lb) <= threshold) {
                continue;
            }
            top = std::max(top, f1_from(lcs_with_masks(cand, ref.masks, scratch), la, lb));
            if (top > threshold) break;
        }
        best[i] = top;
    });

    LeakageResult result;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (best[i] > threshold) {
            result.dropped.push_back(train[i]);
            result.dropped_scores.push_back(best[i]);
        } else {
            result.kept.push_back(train[i]);
        }
    }
    return result;
}

HoldoutSplit split_holdout(std::span<const GeneratedQuery> queries, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must be in (0, 1)");

    std::map<QueryKind, std::vector<std::size_t>> by_kind;
    for (std::size_t i = 0; i < queries.size(); ++i) by_kind[queries[i].kind].push_back(i);

    // Largest-remainder allocation so the total equals round(fraction * N).
    const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(queries.size())));
    struct Share {
        QueryKind kind;
        std::size_t count;
        double remainder;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (const auto& [kind, idx] : by_kind) {
        const double exact = fraction * static_cast<double>(idx.size());
        const auto base = static_cast<std::size_t>(std::floor(exact));
        shares.push_back({kind, base, exact - static_cast<double>(base)});
        assigned += base;
    }
    std::vector<std::size_t> order(shares.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return shares[a].remainder > shares[b].remainder; });
    for (std::size_t j = 0; assigned < total && j < order.size(); ++j, ++assigned) ++shares[order[j]].count;

    std::mt19937_64 rng(seed);
    std::vector<bool> in_holdout(queries.size(), false);
    for (const auto& share : shares) {
        auto idx = by_kind.at(share.kind);
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[bounded(rng, i)]);
        }
        for (std::size_t j = 0; j < share.count && j < idx.size(); ++j) in_holdout[idx[j]] = true;
    }

    HoldoutSplit split;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        (in_holdout[i] ? split.holdout : split.train).push_back(queries[i]);
    }
    return split;
}

std::size_t export_training(std::span<const GeneratedQuery> queries, std::span<const Passage> passages,
                            const std::filesystem::path& path) {
    using nlohmann::json;
    std::unordered_map<std::string_view, std::string_view> texts;
    for (const auto& p : passages) texts.emplace(p.id, p.text);
    for (const auto& q : queries) {
        if (!texts.contains(q.passage_id)) {
            throw IntegrityError("generated query references unknown passage '" + q.passage_id + "'");
        }
    }
    auto out = open_out(path);
    std::size_t written = 0;
    for (const auto& q : queries) {
        const auto positive = texts.at(q.passage_id);
        if (q.text == positive) continue;
        out << json{{"query", q.text},
                    {"positives", json::array({std::string(positive)})},
                    {"negatives", json::array()},
                    {"passage_id", q.passage_id},
                    {"kind", to_string(q.kind)}}
                   .dump()
            << '\n';
        ++written;
    }
    if (!out) throw IoError("write failed: " + path.string());
    return written;
}

std::vector<TrainingExample> read_training(const std::filesystem::path& path) {
    std::vector<TrainingExample> out;
    for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t lineno) {
        TrainingExample ex;
        ex.query = obj.at("query").get<std::string>();
        ex.positives = obj.at("positives").get<std::vector<std::string>>();
        ex.negatives = obj.value("negatives", std::vector<std::string>{});
        ex.passage_id = obj.value("passage_id", std::string{});
        if (const auto it = obj.find("kind"); it != obj.end() && it->is_string()) {
            ex.kind = parse_query_kind(it->get<std::string>());
        }
        if (ex.query.empty()) throw ParseError(path.string(), lineno, "empty query");
        if (ex.positives.empty()) throw ParseError(path.string(), lineno, "no positives");
        out.push_back(std::move(ex));
    });
    return out;
}

void write_generated(std::span<const GeneratedQuery> queries, const std::filesystem::path& path) {
    using nlohmann::json;
    auto out = open_out(path);
    for (const auto& q : queries) {
        out << json{{"passage_id", q.passage_id}, {"kind", to_string(q.kind)}, {"text", q.text}}.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<GeneratedQuery> read_generated(const std::filesystem::path& path) {
    std::vector<GeneratedQuery> out;
    for_each_json_line(path, [&](const nlohmann::json& obj, std::size_t lineno) {
        const auto kind = parse_query_kind(obj.at("kind").get<std::string>());
        if (!kind) throw ParseError(path.string(), lineno, "kind must be SM or KW");
        GeneratedQuery q{obj.at("passage_id").get<std::string>(), *kind, obj.at("text").get<std::string>()};
        if (text::trim(q.text).empty()) throw ParseError(path.string(), lineno, "empty query text");
        out.push_back(std::move(q));
    });
    return out;
}

std::vector<GenStatsRow> gen_stats(std::span<const GeneratedQuery> queries, std::span<const Passage> passages,
                                   const Tokenizer& tokenizer) {
    std::size_t passage_tokens = 0;
    for (const auto& p : passages) passage_tokens += tokenizer.tokenize(p.text).size();

    std::map<QueryKind, std::pair<std::size_t, std::size_t>> counts; // queries, tokens
    for (const auto& q : queries) {
        auto& [n, tokens] = counts[q.kind];
        ++n;
        tokens += tokenizer.tokenize(q.text).size();
    }
    std::vector<GenStatsRow> rows;
    for (const auto& [kind, c] : counts) {
        GenStatsRow row;
        row.kind = kind;
        row.passages = passages.size();
        row.passage_tokens = passage_tokens;
        row.queries = c.first;
        row.queries_per_passage = passages.empty() ? 0.0 : static_cast<double>(c.first) / static_cast<double>(passages.size());
        row.tokens_per_query = static_cast<double>(c.second) / static_cast<double>(c.first);
        rows.push_back(row);
    }
    return rows;
}

} // namespace rankprobe
