#pragma once

#include "rankprobe/http.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rankprobe {

struct EmbeddingVector {
    std::string id;
    std::vector<float> values;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

enum class EmbedRole { QuerySide, PassageSide };

std::string_view to_string(EmbedRole r);

enum class ProviderKind { VectorFile, RemoteService };

inline constexpr std::string_view kDefaultInstructionTemplate = "{instruction} {text}";

struct ProviderConfig {
    ProviderKind kind = ProviderKind::VectorFile;
    std::string model;
    /// Applied to query-side text only.
    std::optional<std::string> instruction;
    /// `{instruction}` and `{text}` are substituted; everything else is literal.
    std::string instruction_template = std::string(kDefaultInstructionTemplate);
    std::optional<std::string> endpoint;
    std::size_t batch_size = 32;
    std::chrono::milliseconds timeout{30000};
    unsigned retries = 2;
    /// Concurrent remote batches in flight.
    std::size_t fan_out = 1;
    /// Vector-file provider inputs, one file per role (ids live in separate namespaces).
    std::optional<std::filesystem::path> query_vectors;
    std::optional<std::filesystem::path> passage_vectors;

    /// std::invalid_argument on a remote config without endpoint, batch_size 0,
    /// a template missing `{text}`, or a vector-file config without files.
    void validate() const;
};

/// Lowercases (simple case folding), then composes the instruction for query-side text.
std::string preprocess(std::string_view text, EmbedRole role, const ProviderConfig& cfg);

struct TextItem {
    std::string id;
    std::string text;
};

/// Raw vector source. Implementations must tolerate concurrent calls.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    /// One raw (not necessarily normalized) vector per item, in order. `items` carry
    /// already-preprocessed text.
    [[nodiscard]] virtual std::vector<std::vector<float>> embed_raw(std::span<const TextItem> items,
                                                                    EmbedRole role) const = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
};

/// Serves precomputed vectors by id; text is ignored.
class VectorFileProvider final : public EmbeddingProvider {
  public:
    VectorFileProvider(std::vector<EmbeddingVector> query_side, std::vector<EmbeddingVector> passage_side);
    static VectorFileProvider open(const std::filesystem::path& query_vectors,
                                   const std::filesystem::path& passage_vectors);

    [[nodiscard]] std::vector<std::vector<float>> embed_raw(std::span<const TextItem> items,
                                                            EmbedRole role) const override;
    [[nodiscard]] std::string describe() const override { return "vector-file"; }

  private:
    std::unordered_map<std::string, std::vector<float>> queries_;
    std::unordered_map<std::string, std::vector<float>> passages_;
};

/// HTTP embedding service client.
///
/// Request (POST, JSON):
///   {"model": str, "role": "query"|"passage", "instruction": str|null, "texts": [str, ...]}
/// Response:
///   {"embeddings": [[float, ...], ...]}   one array per text, same order
///
/// `texts` are sent fully preprocessed (lowercased, instruction already composed for
/// queries); `instruction` is informational and must not be applied again by the server.
/// A bearer token is read from RANKPROBE_EMBED_API_KEY when set.
class RemoteProvider final : public EmbeddingProvider {
  public:
    explicit RemoteProvider(ProviderConfig cfg);

    [[nodiscard]] std::vector<std::vector<float>> embed_raw(std::span<const TextItem> items,
                                                            EmbedRole role) const override;
    [[nodiscard]] std::string describe() const override;

  private:
    ProviderConfig cfg_;
    std::string api_key_;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg);

/// L2-normalizes in place. IntegrityError for an all-zero or non-finite vector.
void normalize(std::vector<float>& v, std::string_view id = {});

/// Preprocesses, splits into cfg.batch_size chunks (cfg.fan_out in flight), and
/// returns one unit-norm vector per item in input order. IntegrityError on a count
/// or dimension mismatch; provider errors propagate.
std::vector<EmbeddingVector> embed_batch(const EmbeddingProvider& provider, std::span<const TextItem> items,
                                         EmbedRole role, const ProviderConfig& cfg);

enum class VectorFileFormat { Binary, Text };

/// Binary layout: one header line
///   `RPVEC 1 dim=<d> count=<n> dtype=float32 endian=little\n`
/// followed by n rows of [u32 id length][id bytes][d x float32], all little-endian.
/// Text layout: one `id \t v1 v2 ... vd` line per vector.
void save_vectors(std::span<const EmbeddingVector> vectors, const std::filesystem::path& path,
                  VectorFileFormat format = VectorFileFormat::Binary);
/// Format is detected from the header. ParseError for a corrupt header, IntegrityError
/// for truncated payloads or mixed dimensions, DuplicateIdError for repeated ids.
std::vector<EmbeddingVector> load_vectors(const std::filesystem::path& path);

} // namespace rankprobe
