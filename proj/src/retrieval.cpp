#include "rankprobe/retrieval.hpp"

#include "rankprobe/error.hpp"
#include "rankprobe/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace rankprobe {
namespace {

struct Candidate {
    float score;
    std::size_t index;
};

} // namespace

PassageMatrix PassageMatrix::from_vectors(std::span<const EmbeddingVector> vectors) {
    PassageMatrix m;
    if (vectors.empty()) return m;
    m.dim_ = vectors.front().values.size();
    if (m.dim_ == 0) throw IntegrityError("passage vectors are empty");
    m.ids_.reserve(vectors.size());
    m.data_.reserve(vectors.size() * m.dim_);
    for (const auto& v : vectors) {
        if (v.values.size() != m.dim_) {
            throw IntegrityError(fmt::format("passage vector '{}' has dimension {}, expected {}", v.id, v.values.size(), m.dim_));
        }
        m.ids_.push_back(v.id);
        m.data_.insert(m.data_.end(), v.values.begin(), v.values.end());
    }
    return m;
}

float dot(std::span<const float> a, std::span<const float> b) noexcept {
    float acc = 0.0F;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

RankedList search_topk(std::span<const float> query, const PassageMatrix& passages, std::size_t k,
                       std::string query_id) {
    if (k == 0) throw std::invalid_argument("search_topk: k must be >= 1");
    RankedList out{std::move(query_id), {}};
    if (passages.size() == 0) return out;
    if (query.size() != passages.dim()) {
        throw IntegrityError(fmt::format("query '{}' has dimension {}, passages have {}", out.query_id, query.size(),
                                         passages.dim()));
    }

    // Min-heap on rank order: the top is the candidate that would be evicted first.
    auto better = [&](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return passages.id(a.index) < passages.id(b.index);
    };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> heap(better);
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const Candidate c{dot(query, passages.row(i)), i};
        if (heap.size() < k) {
            heap.push(c);
        } else if (better(c, heap.top())) {
            heap.pop();
            heap.push(c);
        }
    }
    out.entries.resize(heap.size());
    for (auto i = heap.size(); i-- > 0;) {
        const auto c = heap.top();
        heap.pop();
        out.entries[i] = {passages.id(c.index), static_cast<double>(c.score)};
    }
    return out;
}

RankedList search_topk(const EmbeddingVector& query, const PassageMatrix& passages, std::size_t k) {
    return search_topk(query.values, passages, k, query.id);
}

std::vector<RankedList> search_all(std::span<const EmbeddingVector> queries, const PassageMatrix& passages,
                                   std::size_t k, std::size_t jobs) {
    std::vector<RankedList> out(queries.size());
    parallel_for(queries.size(), jobs, [&](std::size_t i) { out[i] = search_topk(queries[i], passages, k); });
    return out;
}

Run run_all(const Dataset& d, const EmbeddingProvider& provider, const ProviderConfig& cfg, std::size_t k,
            std::size_t jobs, std::string name) {
    std::vector<TextItem> items;
    items.reserve(d.passages().size());
    for (const auto& p : d.passages()) items.push_back({p.id, p.text});
    const auto passage_vecs = embed_batch(provider, items, EmbedRole::PassageSide, cfg);

    items.clear();
    for (const auto& q : d.queries()) items.push_back({q.id, q.text});
    const auto query_vecs = embed_batch(provider, items, EmbedRole::QuerySide, cfg);

    const auto matrix = PassageMatrix::from_vectors(passage_vecs);
    Run run;
    run.name = std::move(name);
    for (auto& list : search_all(query_vecs, matrix, k, jobs)) {
        auto qid = list.query_id;
        run.lists.emplace(std::move(qid), std::move(list));
    }
    run.metadata["retriever"] = "dense";
    run.metadata["provider"] = provider.describe();
    run.metadata["model"] = cfg.model;
    run.metadata["instruction"] = cfg.instruction.value_or("");
    run.metadata["instruction_template"] = cfg.instruction_template;
    run.metadata["k"] = std::to_string(k);
    return run;
}

} // namespace rankprobe
