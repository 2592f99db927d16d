#include "rankprobe/embedding.hpp"

#include "rankprobe/error.hpp"
#include "rankprobe/parallel.hpp"
#include "rankprobe/text.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace rankprobe {
namespace {

constexpr std::string_view kMagic = "RPVEC";

std::unordered_map<std::string, std::vector<float>> index_by_id(std::vector<EmbeddingVector> vectors) {
    std::unordered_map<std::string, std::vector<float>> out;
    out.reserve(vectors.size());
    for (auto& v : vectors) {
        if (!out.emplace(v.id, std::move(v.values)).second) throw DuplicateIdError("duplicate vector id '" + v.id + "'");
    }
    return out;
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t header_value(const std::string& header, const std::string& key, const std::string& src) {
    std::istringstream in(header);
    std::string field;
    while (in >> field) {
        if (field.starts_with(key + "=")) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(field.substr(key.size() + 1), &used);
                if (used == field.size() - key.size() - 1) return static_cast<std::size_t>(v);
            } catch (const std::exception&) {
            }
            break;
        }
    }
    throw ParseError(src, 1, "corrupt header: missing or invalid " + key);
}

std::vector<EmbeddingVector> load_binary(const std::string& data, const std::string& src) {
    const auto eol = data.find('\n');
    if (eol == std::string::npos) throw ParseError(src, 1, "corrupt header: no terminating newline");
    const std::string header = data.substr(0, eol);
    std::istringstream hs(header);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != kMagic || version != "1") throw ParseError(src, 1, "corrupt header: bad magic/version");
    if (header.find("dtype=float32") == std::string::npos || header.find("endian=little") == std::string::npos) {
        throw ParseError(src, 1, "corrupt header: only float32 little-endian is supported");
    }
    const std::size_t dim = header_value(header, "dim", src);
    const std::size_t count = header_value(header, "count", src);

    std::vector<EmbeddingVector> out;
    out.reserve(count);
    std::unordered_set<std::string> seen;
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    std::size_t pos = eol + 1;
    for (std::size_t row = 0; row < count; ++row) {
        if (data.size() - pos < 4) {
            throw IntegrityError(fmt::format("{}: truncated payload, declared {} rows but found {}", src, count, row));
        }
        const std::size_t id_len = get_u32(p + pos);
        pos += 4;
        if (data.size() - pos < id_len + 4 * dim) {
            throw IntegrityError(fmt::format("{}: truncated payload, declared {} rows but found {}", src, count, row));
        }
        EmbeddingVector v;
        v.id.assign(data, pos, id_len);
        pos += id_len;
        v.values.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const std::uint32_t bits = get_u32(p + pos);
            pos += 4;
            v.values[j] = std::bit_cast<float>(bits);
        }
        if (!seen.insert(v.id).second) throw DuplicateIdError(src + ": duplicate vector id '" + v.id + "'");
        out.push_back(std::move(v));
    }
    if (pos != data.size()) throw IntegrityError(src + ": trailing bytes after declared rows");
    return out;
}

std::vector<EmbeddingVector> load_text(const std::string& data, const std::string& src) {
    std::vector<EmbeddingVector> out;
    std::unordered_set<std::string> seen;
    std::istringstream in(data);
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> dim;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(src, lineno, "expected `id<TAB>values`");
        EmbeddingVector v;
        v.id = line.substr(0, tab);
        std::istringstream vs(line.substr(tab + 1));
        std::string tok;
        while (vs >> tok) {
            try {
                std::size_t used = 0;
                v.values.push_back(std::stof(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(src, lineno, "'" + tok + "' is not a float");
            }
        }
        if (!dim) dim = v.values.size();
        if (v.values.size() != *dim) {
            throw IntegrityError(fmt::format("{}:{}: dimension {} differs from {}", src, lineno, v.values.size(), *dim));
        }
        if (!seen.insert(v.id).second) throw DuplicateIdError(src + ": duplicate vector id '" + v.id + "'");
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace

std::string_view to_string(EmbedRole r) { return r == EmbedRole::QuerySide ? "query" : "passage"; }

void ProviderConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    if (fan_out == 0) throw std::invalid_argument("fan-out must be >= 1");
    if (instruction_template.find("{text}") == std::string::npos) {
        throw std::invalid_argument("instruction template must contain {text}");
    }
    if (kind == ProviderKind::RemoteService && (!endpoint || endpoint->empty())) {
        throw std::invalid_argument("remote provider requires an endpoint");
    }
    if (kind == ProviderKind::VectorFile && (!query_vectors || !passage_vectors)) {
        throw std::invalid_argument("vector-file provider requires query and passage vector files");
    }
}

std::string preprocess(std::string_view input, EmbedRole role, const ProviderConfig& cfg) {
    std::string lowered = text::casefold(input);
    if (role != EmbedRole::QuerySide || !cfg.instruction) return lowered;

    std::string out;
    const std::string_view tpl = cfg.instruction_template;
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl.substr(i).starts_with("{instruction}")) {
            out += *cfg.instruction;
            i += 13;
        } else if (tpl.substr(i).starts_with("{text}")) {
            out += lowered;
            i += 6;
        } else {
            out.push_back(tpl[i++]);
        }
    }
    return out;
}

VectorFileProvider::VectorFileProvider(std::vector<EmbeddingVector> query_side,
                                       std::vector<EmbeddingVector> passage_side)
    : queries_(index_by_id(std::move(query_side))), passages_(index_by_id(std::move(passage_side))) {}

VectorFileProvider VectorFileProvider::open(const std::filesystem::path& query_vectors,
                                            const std::filesystem::path& passage_vectors) {
    return VectorFileProvider(load_vectors(query_vectors), load_vectors(passage_vectors));
}

std::vector<std::vector<float>> VectorFileProvider::embed_raw(std::span<const TextItem> items, EmbedRole role) const {
    const auto& table = role == EmbedRole::QuerySide ? queries_ : passages_;
    std::vector<std::vector<float>> out;
    out.reserve(items.size());
    for (const auto& item : items) {
        const auto it = table.find(item.id);
        if (it == table.end()) {
            throw LookupError(fmt::format("no {} vector for id '{}'", to_string(role), item.id));
        }
        out.push_back(it->second);
    }
    return out;
}

RemoteProvider::RemoteProvider(ProviderConfig cfg)
    : cfg_(std::move(cfg)), api_key_(http::env_or_empty("RANKPROBE_EMBED_API_KEY")) {
    if (!cfg_.endpoint || cfg_.endpoint->empty()) throw std::invalid_argument("remote provider requires an endpoint");
}

std::string RemoteProvider::describe() const { return "remote:" + *cfg_.endpoint + " model=" + cfg_.model; }

std::vector<std::vector<float>> RemoteProvider::embed_raw(std::span<const TextItem> items, EmbedRole role) const {
    using nlohmann::json;
    json req;
    req["model"] = cfg_.model;
    req["role"] = to_string(role);
    req["instruction"] = role == EmbedRole::QuerySide && cfg_.instruction ? json(*cfg_.instruction) : json(nullptr);
    req["texts"] = json::array();
    for (const auto& item : items) req["texts"].push_back(item.text);

    http::Headers headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
    const std::string body = http::post_json(*cfg_.endpoint, req.dump(), headers,
                                             {cfg_.retries, cfg_.timeout, std::chrono::milliseconds(200)});
    std::vector<std::vector<float>> out;
    try {
        const json res = json::parse(body);
        for (const auto& row : res.at("embeddings")) out.push_back(row.get<std::vector<float>>());
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what());
    }
    return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
    cfg.validate();
    if (cfg.kind == ProviderKind::RemoteService) return std::make_unique<RemoteProvider>(cfg);
    return std::make_unique<VectorFileProvider>(VectorFileProvider::open(*cfg.query_vectors, *cfg.passage_vectors));
}

void normalize(std::vector<float>& v, std::string_view id) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw IntegrityError(fmt::format("vector '{}' cannot be normalized (norm {})", id, norm));
    }
    for (float& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
}

std::vector<EmbeddingVector> embed_batch(const EmbeddingProvider& provider, std::span<const TextItem> items,
                                         EmbedRole role, const ProviderConfig& cfg) {
    if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    std::vector<TextItem> prepared;
    prepared.reserve(items.size());
    for (const auto& item : items) prepared.push_back({item.id, preprocess(item.text, role, cfg)});

    const std::size_t batches = (prepared.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::vector<std::vector<float>>> results(batches);
    parallel_for(batches, cfg.fan_out, [&](std::size_t b) {
        const std::size_t begin = b * cfg.batch_size;
        const std::size_t len = std::min(cfg.batch_size, prepared.size() - begin);
        results[b] = provider.embed_raw(std::span<const TextItem>(prepared).subspan(begin, len), role);
        if (results[b].size() != len) {
            throw IntegrityError(fmt::format("provider returned {} vectors for a batch of {}", results[b].size(), len));
        }
    });

    std::vector<EmbeddingVector> out;
    out.reserve(prepared.size());
    std::optional<std::size_t> dim;
    std::size_t i = 0;
    for (auto& batch : results) {
        for (auto& values : batch) {
            const auto& id = prepared[i++].id;
            if (!dim) dim = values.size();
            if (values.size() != *dim || values.empty()) {
                throw IntegrityError(fmt::format("vector '{}' has dimension {}, expected {}", id, values.size(), *dim));
            }
            normalize(values, id);
            out.push_back({id, std::move(values)});
        }
    }
    return out;
}

void save_vectors(std::span<const EmbeddingVector> vectors, const std::filesystem::path& path,
                  VectorFileFormat format) {
    const std::size_t dim = vectors.empty() ? 0 : vectors.front().values.size();
    std::unordered_set<std::string_view> seen;
    for (const auto& v : vectors) {
        if (v.values.size() != dim) throw IntegrityError("save_vectors: mixed dimensions");
        if (!seen.insert(v.id).second) throw DuplicateIdError("save_vectors: duplicate id '" + v.id + "'");
    }
    std::string buf;
    if (format == VectorFileFormat::Binary) {
        buf = fmt::format("{} 1 dim={} count={} dtype=float32 endian=little\n", kMagic, dim, vectors.size());
        for (const auto& v : vectors) {
            put_u32(buf, static_cast<std::uint32_t>(v.id.size()));
            buf += v.id;
            for (float x : v.values) put_u32(buf, std::bit_cast<std::uint32_t>(x));
        }
    } else {
        for (const auto& v : vectors) {
            if (v.id.find_first_of("\t\n\r") != std::string::npos) {
                throw IntegrityError("save_vectors: id '" + v.id + "' contains a tab or newline");
            }
            fmt::format_to(std::back_inserter(buf), "{}\t{}\n", v.id, fmt::join(v.values, " "));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EmbeddingVector> load_vectors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.starts_with(kMagic)) return load_binary(data, path.string());
    return load_text(data, path.string());
}

} // namespace rankprobe
