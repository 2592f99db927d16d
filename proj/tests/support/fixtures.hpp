// Small helpers shared by the test binaries: scratch directories, file writers and
// random datasets/runs.
#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/run.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

class TempDir {
  public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() / ("rankprobe-test-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Passages get short CJK/Latin texts; each query gets 0..3 labelled passages.
inline rankprobe::Dataset random_dataset(std::mt19937_64& rng, std::size_t n_passages, std::size_t n_queries) {
    using namespace rankprobe;
    static const char* words[] = {"花", "猫", "紫色", "炸鸡", "car", "white", "tree", "山", "路", "red"};
    std::uniform_int_distribution<int> word(0, 9);
    std::uniform_int_distribution<int> len(1, 6);
    std::uniform_int_distribution<std::size_t> pick(0, n_passages - 1);
    std::uniform_int_distribution<int> npos(0, 3);
    std::uniform_int_distribution<int> grade(0, 2);
    std::uniform_int_distribution<int> qt(0, 7);

    std::vector<Passage> passages;
    for (std::size_t i = 0; i < n_passages; ++i) {
        std::string t;
        for (int w = len(rng); w > 0; --w) t += std::string(words[word(rng)]) + " ";
        passages.push_back({"p" + std::to_string(i), t + std::to_string(i)});
    }
    std::vector<Query> queries;
    LabelMatrix labels;
    for (std::size_t i = 0; i < n_queries; ++i) {
        const std::string id = "q" + std::to_string(i);
        queries.push_back({id, std::string(words[word(rng)]) + " " + words[word(rng)],
                           kAllQueryTypes[static_cast<std::size_t>(qt(rng))]});
        for (int j = npos(rng); j > 0; --j) {
            labels.set(id, passages[pick(rng)].id, *RelevanceGrade::from_int(grade(rng)));
        }
    }
    return Dataset::create("random", std::move(passages), std::move(queries), std::move(labels));
}
