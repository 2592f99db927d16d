#include "rankprobe/lexical.hpp"

#include "rankprobe/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rankprobe {

Bm25Index::Bm25Index(Bm25Params params) : params_(params) {
    if (!(params_.k1 > 0.0)) throw std::invalid_argument("bm25: k1 must be > 0");
    if (!(params_.b >= 0.0 && params_.b <= 1.0)) throw std::invalid_argument("bm25: b must be in [0, 1]");
}

Bm25Index Bm25Index::build(std::span<const Passage> passages, const Tokenizer& tok, Bm25Params params) {
    Bm25Index idx(params);
    idx.doc_ids_.reserve(passages.size());
    // Defer the vocabulary-wide idf average to one pass at the end.
    const IdfForm form = idx.params_.idf;
    idx.params_.idf = IdfForm::Lucene;
    for (const auto& p : passages) idx.add(p.id, tok.tokenize(p.text));
    idx.params_.idf = form;
    idx.refresh_average_idf();
    return idx;
}

void Bm25Index::add(std::string doc_id, std::span<const std::string> tokens) {
    const auto index = static_cast<std::uint32_t>(doc_ids_.size());
    if (!doc_index_.emplace(doc_id, index).second) throw DuplicateIdError("bm25: duplicate doc id '" + doc_id + "'");
    doc_ids_.push_back(std::move(doc_id));
    doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_len_ += tokens.size();

    std::unordered_map<std::string_view, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) {
        postings_[std::string(term)].push_back({index, count});
    }
    refresh_average_idf();
}

void Bm25Index::refresh_average_idf() {
    if (params_.idf != IdfForm::ClassicEpsilon || postings_.empty()) return;
    const double n = static_cast<double>(doc_count());
    double sum = 0.0;
    for (const auto& [term, list] : postings_) {
        const double df = static_cast<double>(list.size());
        sum += std::log(n - df + 0.5) - std::log(df + 0.5);
    }
    average_idf_ = sum / static_cast<double>(postings_.size());
}

double Bm25Index::avgdl() const noexcept {
    return doc_ids_.empty() ? 0.0 : static_cast<double>(total_len_) / static_cast<double>(doc_ids_.size());
}

std::size_t Bm25Index::df(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::span<const Bm25Index::Posting> Bm25Index::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    return it->second;
}

std::size_t Bm25Index::doc_len(const std::string& doc_id) const {
    const auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw LookupError("bm25: unknown doc id '" + doc_id + "'");
    return doc_lens_[it->second];
}

double Bm25Index::idf_from_df(std::size_t df) const {
    const double n = static_cast<double>(doc_count());
    const double d = static_cast<double>(df);
    if (params_.idf == IdfForm::Lucene) return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    const double classic = std::log(n - d + 0.5) - std::log(d + 0.5);
    return classic < 0.0 ? params_.epsilon * average_idf_ : classic;
}

double Bm25Index::idf(const std::string& term) const { return idf_from_df(df(term)); }

double Bm25Index::term_weight(std::uint32_t tf, std::uint32_t doc_len, double avg) const {
    const double f = tf;
    const double norm = avg > 0.0 ? static_cast<double>(doc_len) / avg : 0.0;
    return f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
}

double Bm25Index::score(std::span<const std::string> query_tokens, const std::string& doc_id) const {
    const auto dit = doc_index_.find(doc_id);
    if (dit == doc_index_.end()) throw LookupError("bm25: unknown doc id '" + doc_id + "'");
    const std::uint32_t doc = dit->second;
    const double avg = avgdl();
    double total = 0.0;
    for (const auto& t : query_tokens) {
        const auto pit = postings_.find(t);
        if (pit == postings_.end()) continue;
        // Postings are appended in doc order, so each list is sorted by doc.
        const auto& list = pit->second;
        const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                         [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != doc) continue;
        total += idf_from_df(list.size()) * term_weight(it->tf, doc_lens_[doc], avg);
    }
    return total;
}

RankedList Bm25Index::search(std::span<const std::string> query_tokens, std::size_t k, std::string query_id) const {
    RankedList out{std::move(query_id), {}};
    if (k == 0 || doc_ids_.empty()) return out;

    const double avg = avgdl();
    std::vector<double> acc(doc_ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& t : query_tokens) {
        const auto pit = postings_.find(t);
        if (pit == postings_.end()) continue;
        const double w = idf_from_df(pit->second.size());
        for (const auto& p : pit->second) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += w * term_weight(p.tf, doc_lens_[p.doc], avg);
        }
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

    std::vector<ScoredPassage> hits;
    hits.reserve(touched.size());
    for (auto d : touched) {
        if (acc[d] > 0.0) hits.push_back({doc_ids_[d], acc[d]});
    }
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), ranks_before);
    hits.resize(n);
    out.entries = std::move(hits);
    return out;
}

RankedList bm25_search(const Bm25Index& idx, std::string_view query, const Tokenizer& tok, std::size_t k,
                       std::string query_id) {
    return idx.search(tok.tokenize(query), k, std::move(query_id));
}

Run bm25_run(const Dataset& d, const Tokenizer& tok, std::size_t k, Bm25Params params, std::string name) {
    const Bm25Index idx = Bm25Index::build(d.passages(), tok, params);
    Run run;
    run.name = std::move(name);
    for (const auto& q : d.queries()) run.lists.emplace(q.id, bm25_search(idx, q.text, tok, k, q.id));
    run.metadata["retriever"] = "bm25";
    run.metadata["tokenizer"] = tok.name();
    run.metadata["k"] = std::to_string(k);
    run.metadata["k1"] = std::to_string(params.k1);
    run.metadata["b"] = std::to_string(params.b);
    run.metadata["idf"] = params.idf == IdfForm::Lucene ? "lucene" : "classic-eps";
    return run;
}

} // namespace rankprobe
