#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/embedding.hpp"
#include "rankprobe/run.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rankprobe {

/// Row-major float32 matrix of unit-norm passage vectors with their ids.
class PassageMatrix {
  public:
    PassageMatrix() = default;
    /// IntegrityError when dimensions differ or a vector is empty.
    static PassageMatrix from_vectors(std::span<const EmbeddingVector> vectors);

    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] const std::string& id(std::size_t i) const { return ids_[i]; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const {
        return std::span<const float>(data_).subspan(i * dim_, dim_);
    }

  private:
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::size_t dim_ = 0;
};

/// float32 dot product, accumulated sequentially.
[[nodiscard]] float dot(std::span<const float> a, std::span<const float> b) noexcept;

/// Exact top-k by dot product with a bounded heap; ties go to the smaller passage id,
/// so the result does not depend on passage order. std::invalid_argument for k == 0,
/// IntegrityError on dimension mismatch.
RankedList search_topk(std::span<const float> query, const PassageMatrix& passages, std::size_t k,
                       std::string query_id = {});
RankedList search_topk(const EmbeddingVector& query, const PassageMatrix& passages, std::size_t k);

/// search_topk for every query on `jobs` workers (0 = all cores); output in input order.
std::vector<RankedList> search_all(std::span<const EmbeddingVector> queries, const PassageMatrix& passages,
                                   std::size_t k, std::size_t jobs = 0);

/// Embeds every passage and query once and searches every query, zero-positive ones included.
Run run_all(const Dataset& d, const EmbeddingProvider& provider, const ProviderConfig& cfg, std::size_t k,
            std::size_t jobs = 0, std::string name = "dense");

} // namespace rankprobe
