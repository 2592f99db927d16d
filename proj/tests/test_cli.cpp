// Drives the built command-line tool as a subprocess.
#include "rankprobe/corpus.hpp"
#include "rankprobe/datagen.hpp"
#include "rankprobe/embedding.hpp"
#include "rankprobe/lexical.hpp"
#include "rankprobe/retrieval.hpp"
#include "rankprobe/run.hpp"
#include "rankprobe/tokenizer.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/stub_server.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <random>
#include <sys/wait.h>

using namespace rankprobe;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'') q += "'\\''";
        else q += c;
    }
    return q + "'";
}

class Cli : public ::testing::Test {
  protected:
    TempDir dir;
    Dataset data = [] {
        std::mt19937_64 rng(401);
        return random_dataset(rng, 40, 25);
    }();

    void SetUp() override {
        std::filesystem::create_directories(dir / "ds");
        save_dataset(data, DatasetPaths::in_directory(dir / "ds"));
    }

    Result run(const std::vector<std::string>& args) {
        // Commands without an output file drop their sidecar in the working directory.
        std::string cmd = "cd " + quote(dir.path().string()) + " && " + quote(RANKPROBE_CLI_PATH);
        for (const auto& a : args) cmd += " " + quote(a);
        cmd += " >" + quote((dir / "stdout").string()) + " 2>" + quote((dir / "stderr").string());
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_file(dir / "stdout");
        r.err = read_file(dir / "stderr");
        return r;
    }

    std::string ds() { return (dir / "ds").string(); }
    std::string path(const std::string& name) { return (dir / name).string(); }
};

} // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"bm25", "--dataset", ds(), "-o", path("r.run"), "--no-such-flag"}).code, 2);
    EXPECT_EQ(run({"bm25", "--dataset", ds(), "-o", path("r.run"), "--k1", "-1"}).code, 2);
    EXPECT_EQ(run({"eval", "--dataset", ds(), "--run", path("missing.run")}).code, 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
    write_file(dir / "bad.run", "q0 Q0 p0 1 0.5\n");
    const auto r = run({"eval", "--dataset", ds(), "--run", path("bad.run")});
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
    write_file(dir / "ds" / "labels.tsv", "q_unknown\tp0\t2\n");
    EXPECT_EQ(run({"stats", "--dataset", ds()}).code, 1);
}

TEST_F(Cli, Bm25MatchesLibraryAndWritesSidecar) {
    const auto r = run({"bm25", "--dataset", ds(), "-o", path("bm25.run"), "-k", "10"});
    ASSERT_EQ(r.code, 0) << r.err;

    const UnigramTokenizer tok;
    const rankprobe::Run expected = bm25_run(data, tok, 10);
    std::ostringstream want;
    write_run(expected, want);
    EXPECT_EQ(read_file(dir / "bm25.run"), want.str());

    const json meta = json::parse(read_file(dir / "bm25.run.meta.json"));
    EXPECT_EQ(meta.at("subcommand"), "bm25");
    for (const char* key : {"tool", "version", "config", "config_hash", "inputs", "outputs", "started_at", "finished_at"}) {
        EXPECT_TRUE(meta.contains(key)) << key;
    }
    EXPECT_EQ(meta.at("outputs").at(0), path("bm25.run"));

    // The recorded config replays to the same run.
    write_file(dir / "replay.ini", meta.at("config").get<std::string>());
    ASSERT_EQ(run({"--config", path("replay.ini"), "bm25", "-o", path("again.run")}).code, 0);
    EXPECT_EQ(read_file(dir / "again.run"), read_file(dir / "bm25.run"));
}

TEST_F(Cli, ConfigFileSetsDefaultsAndFlagsWin) {
    write_file(dir / "c.ini", "[bm25]\nk1=1.2\nb=0.5\n");
    ASSERT_EQ(run({"--config", path("c.ini"), "bm25", "--dataset", ds(), "-o", path("a.run"), "--b", "0.3"}).code, 0);
    const UnigramTokenizer tok;
    Bm25Params params;
    params.k1 = 1.2;
    params.b = 0.3;
    std::ostringstream want;
    write_run(bm25_run(data, tok, 100, params), want);
    EXPECT_EQ(read_file(dir / "a.run"), want.str());
}

TEST_F(Cli, RefusesToOverwriteInputs) {
    const std::string passages = (dir / "ds" / "passages.tsv").string();
    const std::string before = read_file(passages);
    EXPECT_NE(run({"bm25", "--dataset", ds(), "-o", passages}).code, 0);
    EXPECT_EQ(read_file(passages), before);
}

TEST_F(Cli, SearchEvalCompare) {
    std::mt19937_64 rng(409);
    std::vector<EmbeddingVector> pv, qv;
    for (const auto& p : data.passages()) pv.push_back({p.id, oracle::random_unit(rng, 16)});
    for (const auto& q : data.queries()) qv.push_back({q.id, oracle::random_unit(rng, 16)});
    save_vectors(pv, dir / "p.vec");
    save_vectors(qv, dir / "q.vec", VectorFileFormat::Text);

    ASSERT_EQ(run({"search", "--dataset", ds(), "--query-vectors", path("q.vec"), "--passage-vectors", path("p.vec"), "-k",
                   "5", "-o", path("dense.run")})
                  .code,
              0);
    const rankprobe::Run dense = read_run(dir / "dense.run");
    for (const auto& q : data.queries()) {
        const auto& got = dense.lists.at(q.id).entries;
        const auto& query = std::find_if(qv.begin(), qv.end(), [&](const auto& v) { return v.id == q.id; })->values;
        std::vector<std::string> ids;
        std::vector<std::vector<float>> rows;
        for (const auto& v : pv) {
            ids.push_back(v.id);
            rows.push_back(v.values);
        }
        const auto want = oracle::exhaustive_dense(query, ids, rows, 5);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].passage_id, want[i].id);
    }

    ASSERT_EQ(run({"bm25", "--dataset", ds(), "-o", path("bm25.run")}).code, 0);
    const auto ev = run({"eval", "--dataset", ds(), "--run", path("dense.run"), "--by-type", "--records",
                         path("eval.jsonl")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_NE(ev.out.find("nDCG@10"), std::string::npos);
    EXPECT_FALSE(read_file(dir / "eval.jsonl").empty());

    const auto cmp = run({"compare", "--dataset", ds(), "--run-a", path("dense.run"), "--run-b", path("dense.run")});
    ASSERT_EQ(cmp.code, 0) << cmp.err;
    EXPECT_NE(cmp.out.find("100"), std::string::npos);
}

TEST_F(Cli, ConvertRoundTrip) {
    ASSERT_EQ(run({"convert", "--dataset", ds(), "--to-jsonl", path("d.jsonl")}).code, 0);
    ASSERT_EQ(run({"convert", "--dataset-jsonl", path("d.jsonl"), "--dataset-name", "random", "--to-dir", path("back")}).code,
              0);
    for (const char* f : {"passages.tsv", "queries.tsv", "labels.tsv"}) {
        EXPECT_EQ(read_file(dir / "back" / f), read_file(dir / "ds" / f)) << f;
    }
}

TEST_F(Cli, GenerationPipeline) {
    StubServer stub([](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const std::string user = body.at("messages").at(1).at("content");
        const bool kw = user.find("keywords") != std::string::npos;
        const auto h = std::hash<std::string>{}(user) % 1000;
        const std::string content = kw ? "1. kw" + std::to_string(h) + "\n2. shared" : "1. sm" + std::to_string(h);
        res.set_content(json{{"choices", json::array({{{"message", {{"content", content}}}}})}}.dump(), "application/json");
    });
    std::vector<Passage> pool;
    for (int i = 0; i < 30; ++i) pool.push_back({"t" + std::to_string(i), "training passage " + std::to_string(i)});
    pool.push_back({"leak", data.passages().front().text});
    save_passages(pool, dir / "pool.tsv");

    ASSERT_EQ(run({"filter", "--dataset", ds(), "--train", path("pool.tsv"), "--out-kept", path("kept.tsv"),
                   "--out-dropped", path("dropped.jsonl")})
                  .code,
              0);
    const auto kept = load_passages(dir / "kept.tsv");
    EXPECT_EQ(kept.size(), 30u);
    EXPECT_NE(read_file(dir / "dropped.jsonl").find("leak"), std::string::npos);

    const auto gen = run({"gen", "--passages", path("kept.tsv"), "--endpoint", stub.url("/v1/chat/completions"), "--model",
                          "m", "-o", path("gen.jsonl"), "--audit-log", path("audit.jsonl")});
    ASSERT_EQ(gen.code, 0) << gen.err;
    const auto generated = read_generated(dir / "gen.jsonl");
    EXPECT_EQ(generated.size(), 30u * 3u);
    EXPECT_EQ(stub.hits(), 60);

    ASSERT_EQ(run({"split", "--generated", path("gen.jsonl"), "--out-train", path("train.jsonl"), "--out-holdout",
                   path("holdout.jsonl")})
                  .code,
              0);
    const auto train = read_generated(dir / "train.jsonl");
    const auto holdout = read_generated(dir / "holdout.jsonl");
    EXPECT_EQ(train.size() + holdout.size(), generated.size());
    EXPECT_TRUE(holdout.size() == 4u || holdout.size() == 5u);

    ASSERT_EQ(run({"export", "--generated", path("train.jsonl"), "--passages", path("kept.tsv"), "-o", path("export.jsonl")})
                  .code,
              0);
    EXPECT_EQ(read_training(dir / "export.jsonl").size(), train.size());
}
