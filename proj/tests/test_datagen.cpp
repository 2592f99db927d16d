#include "rankprobe/datagen.hpp"
#include "rankprobe/error.hpp"
#include "rankprobe/llm_client.hpp"
#include "rankprobe/text.hpp"
#include "rankprobe/tokenizer.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/stub_server.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>

using namespace rankprobe;
using nlohmann::json;

namespace {

const char* kBill = "图片显示了上海市电力公司的月度账单，包括2021年5月至9月的用电费用和支付状态。";

// Answers by prompt kind; counts calls. Replies can be scripted per call index.
class ScriptedClient : public LlmClient {
  public:
    std::function<std::string(const ChatRequest&, int)> reply;
    mutable std::atomic<int> calls{0};
    mutable std::mutex mutex;
    mutable std::vector<ChatRequest> requests;

    std::string complete(const ChatRequest& r) const override {
        const int n = calls++;
        {
            std::lock_guard lock(mutex);
            requests.push_back(r);
        }
        return reply(r, n);
    }
};

bool is_keyword_prompt(const ChatRequest& r) { return r.user.find("keywords") != std::string::npos; }

} // namespace

TEST(ListParsing, MarkersAndBullets) {
    const auto items = parse_list_response(
        "Here you go:\n1. 电费账单\n2) 用电费用\n3、支付状态\n4．上海电力\n5: \"月度账单\"\n- 缴费记录\n* 电力公司\n• 2021年电费\n\n6.  \n");
    EXPECT_EQ(items, (std::vector<std::string>{"电费账单", "用电费用", "支付状态", "上海电力", "月度账单", "缴费记录",
                                               "电力公司", "2021年电费"}));
    EXPECT_TRUE(parse_list_response("I cannot help with that.").empty());
    EXPECT_TRUE(parse_list_response("").empty());
}

TEST(Prompts, BuiltinTemplatesRender) {
    const auto lib = PromptLibrary::builtin();
    for (const char* id : {"sm_v1", "kw_v1"}) {
        const auto& t = lib.get(id);
        EXPECT_FALSE(t.system.empty());
        const auto user = t.render_user(kBill, 7);
        EXPECT_NE(user.find(kBill), std::string::npos);
        EXPECT_NE(user.find("7"), std::string::npos);
        EXPECT_EQ(user.find("{passage}"), std::string::npos);
        EXPECT_EQ(user.find("{max}"), std::string::npos);
    }
    EXPECT_THROW((void)lib.get("nope"), LookupError);
}

TEST(Prompts, DirectoryOverridesAndValidation) {
    TempDir dir;
    write_file(dir / "kw_v2.txt", "# comment\n[system]\nsys\n[user]\nP={passage} N={max}\n");
    const auto lib = PromptLibrary::with_directory(dir.path());
    EXPECT_EQ(lib.get("kw_v2").render_user("x", 3), "P=x N=3");
    EXPECT_NO_THROW((void)lib.get("sm_v1"));
    EXPECT_THROW((void)parse_prompt_template("bad", "[user]\nonly user\n"), ParseError);
}

TEST(Generate, DedupDegenerateAndKinds) {
    ScriptedClient client;
    client.reply = [](const ChatRequest& r, int) {
        if (is_keyword_prompt(r)) return std::string("1. 电费\n2. 账单\n3. 电费 \n4. 支付状态");
        return std::string("1. 上海电力公司账单查询\n2. 账单\n3. ") + kBill;
    };
    const std::vector<Passage> passages{{"p1", kBill}};
    GenConfig cfg;
    cfg.model = "m";
    GenerationStats stats;
    const auto out = generate_queries(passages, cfg, client, PromptLibrary::builtin(), &stats);
    // SM comes first; the repeated "账单" and "电费 " are dropped, as is the copy of the passage.
    std::vector<std::pair<QueryKind, std::string>> got;
    for (const auto& q : out) got.emplace_back(q.kind, q.text);
    EXPECT_EQ(got, (std::vector<std::pair<QueryKind, std::string>>{{QueryKind::SM, "上海电力公司账单查询"},
                                                                   {QueryKind::SM, "账单"},
                                                                   {QueryKind::KW, "电费"},
                                                                   {QueryKind::KW, "支付状态"}}));
    EXPECT_EQ(stats.requests, 2u);
    EXPECT_EQ(stats.duplicates_dropped, 2u);
    EXPECT_EQ(stats.degenerate_dropped, 1u);
    for (const auto& q : out) {
        EXPECT_EQ(q.text, std::string(text::trim(q.text)));
        EXPECT_FALSE(q.text.empty());
    }
}

TEST(Generate, RetriesUnparseableRepliesThenSkips) {
    ScriptedClient client;
    std::atomic<int> sm_calls{0};
    client.reply = [&](const ChatRequest& r, int) {
        if (is_keyword_prompt(r)) return std::string("no list here");
        return ++sm_calls == 1 ? std::string("sorry") : std::string("1. 查询");
    };
    GenConfig cfg;
    cfg.parse_retries = 2;
    cfg.concurrency = 1;
    GenerationStats stats;
    const std::vector<Passage> passages{{"p1", kBill}};
    const auto out = generate_queries(passages, cfg, client, PromptLibrary::builtin(), &stats);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, QueryKind::SM);
    EXPECT_EQ(stats.requests, 2u + 3u);
    EXPECT_EQ(stats.skipped, 1u);
    EXPECT_EQ(stats.parse_failures, 1u + 3u);
}

TEST(Generate, DeterministicGivenResponsesAndCapped) {
    std::vector<Passage> passages;
    for (int i = 0; i < 12; ++i) passages.push_back({"p" + std::to_string(i), "passage number " + std::to_string(i)});
    auto reply = [](const ChatRequest& r, int) {
        // Depends only on the request, never on call order.
        std::string out;
        const auto h = std::hash<std::string>{}(r.user);
        for (int i = 0; i < 30; ++i) out += std::to_string(i + 1) + ". q" + std::to_string((h >> (i % 13)) % 17) + "\n";
        return out;
    };
    GenConfig cfg;
    cfg.max_per_kind = 5;
    std::vector<GeneratedQuery> first;
    for (std::size_t conc : {1u, 3u, 8u}) {
        ScriptedClient client;
        client.reply = reply;
        cfg.concurrency = conc;
        const auto out = generate_queries(passages, cfg, client, PromptLibrary::builtin());
        if (first.empty()) first = out;
        EXPECT_EQ(out, first);
    }
    std::map<std::pair<std::string, QueryKind>, int> per;
    for (const auto& q : first) ++per[{q.passage_id, q.kind}];
    for (const auto& [key, n] : per) EXPECT_LE(n, 5);
}

TEST(Generate, ConfigValidation) {
    GenConfig cfg;
    cfg.leakage_threshold = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.leakage_threshold = 1.0;
    EXPECT_NO_THROW(cfg.validate());
    cfg.max_per_kind = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(HttpLlm, ChatContractAndAuditLog) {
    StubServer stub([](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const std::string user = body.at("messages").at(1).at("content");
        json out{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "1. echo " + user}}}}})}};
        res.set_content(out.dump(), "application/json");
    });
    TempDir dir;
    setenv("RANKPROBE_LLM_API_KEY", "llm-key", 1);
    const HttpLlmClient client(stub.url("/v1/chat/completions"), {}, dir / "audit.jsonl");
    unsetenv("RANKPROBE_LLM_API_KEY");
    EXPECT_EQ(client.complete({"gpt", "sys", "hello", 0.3}), "1. echo hello");

    const json req = json::parse(stub.bodies().at(0));
    EXPECT_EQ(req.at("model"), "gpt");
    EXPECT_DOUBLE_EQ(req.at("temperature").get<double>(), 0.3);
    EXPECT_EQ(req.at("messages").at(0).at("role"), "system");
    EXPECT_EQ(req.at("messages").at(0).at("content"), "sys");
    EXPECT_EQ(stub.auth_headers().at(0), "Bearer llm-key");

    const json audit = json::parse(read_file(dir / "audit.jsonl"));
    EXPECT_EQ(audit.at("request").at("model"), "gpt");
    EXPECT_NE(audit.at("response").get<std::string>().find("echo hello"), std::string::npos);
}

TEST(HttpLlm, MalformedReply) {
    StubServer stub([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    const HttpLlmClient client(stub.url());
    EXPECT_THROW((void)client.complete({"m", "s", "u", 0.0}), TransportError);
}

TEST(HttpLlm, DrivesGenerationEndToEnd) {
    StubServer stub([](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const bool kw = body.at("messages").at(1).at("content").get<std::string>().find("keywords") != std::string::npos;
        const std::string content = kw ? "1. 电费\n2. 账单" : "1. 上海电力公司账单查询";
        res.set_content(json{{"choices", json::array({{{"message", {{"content", content}}}}})}}.dump(), "application/json");
    });
    const HttpLlmClient client(stub.url());
    const std::vector<Passage> passages{{"p1", kBill}, {"p2", "另一段文字"}};
    const auto out = generate_queries(passages, GenConfig{}, client, PromptLibrary::builtin());
    EXPECT_EQ(out.size(), 6u);
    EXPECT_EQ(stub.hits(), 4);
}

TEST(Rouge, MatchesDynamicProgrammingOracle) {
    std::mt19937_64 rng(311);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto a = oracle::random_text(rng, rep % 10 == 0 ? 150 : 40);
        const auto b = oracle::random_text(rng, rep % 7 == 0 ? 90 : 40);
        EXPECT_EQ(lcs_length(a, b), oracle::lcs_dp(a, b));
        EXPECT_NEAR(rouge_l_f1(oracle::utf8(a), oracle::utf8(b)), oracle::rouge_l_f1_dp(a, b), 1e-12);
    }
}

TEST(Rouge, Properties) {
    std::mt19937_64 rng(313);
    for (int rep = 0; rep < 300; ++rep) {
        const auto a = oracle::random_text(rng, 30);
        auto b = oracle::random_text(rng, 30);
        const double f = rouge_l_f1(oracle::utf8(a), oracle::utf8(b));
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
        EXPECT_EQ(f == 1.0, a == b && !a.empty());
        b.resize(a.size(), U'x');
        EXPECT_DOUBLE_EQ(rouge_l_f1(oracle::utf8(a), oracle::utf8(b)), rouge_l_f1(oracle::utf8(b), oracle::utf8(a)));
    }
    EXPECT_DOUBLE_EQ(rouge_l_f1("紫色的花", "紫色的花"), 1.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("", "abc"), 0.0);
    // LCS 2 of lengths 4 and 2: P = 0.5, R = 1.
    EXPECT_NEAR(rouge_l_f1("紫色的花", "紫花"), 2.0 / 3.0, 1e-15);
}

namespace {

// Test passages plus training passages that are mutations of them at varying strength.
std::pair<std::vector<Passage>, std::vector<Passage>> near_duplicates(std::mt19937_64& rng) {
    std::vector<Passage> test, train;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 15; ++i) {
        auto t = oracle::random_text(rng, 40);
        if (t.empty()) t = U"花";
        test.push_back({"t" + std::to_string(i), oracle::utf8(t)});
        for (int j = 0; j < 4; ++j) {
            auto m = t;
            const double rate = u(rng);
            for (auto& c : m) {
                if (u(rng) < rate) c = U'猫';
            }
            train.push_back({"r" + std::to_string(i) + "_" + std::to_string(j), oracle::utf8(m)});
        }
    }
    train.push_back({"exact", test[3].text});
    train.push_back({"other", "completely unrelated text"});
    return {train, test};
}

std::set<std::string> dropped_ids(const LeakageResult& r) {
    std::set<std::string> ids;
    for (const auto& p : r.dropped) ids.insert(p.id);
    return ids;
}

} // namespace

TEST(Leakage, MonotoneInThreshold) {
    std::mt19937_64 rng(317);
    for (int rep = 0; rep < 10; ++rep) {
        const auto [train, test] = near_duplicates(rng);
        std::set<std::string> previous;
        bool first = true;
        for (double theta : {0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 1.0}) {
            const auto now = dropped_ids(filter_leakage(train, test, theta, 2));
            if (!first) EXPECT_TRUE(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
            previous = now;
            first = false;
        }
    }
}

TEST(Leakage, ExactDuplicatesDroppedAndScoresMatchBruteForce) {
    std::mt19937_64 rng(331);
    const auto [train, test] = near_duplicates(rng);
    const auto result = filter_leakage(train, test, 0.6, 3);
    EXPECT_TRUE(dropped_ids(result).contains("exact"));
    EXPECT_EQ(result.kept.size() + result.dropped.size(), train.size());
    std::set<std::string> expected;
    for (const auto& p : train) {
        double best = 0.0;
        for (const auto& t : test) best = std::max(best, rouge_l_f1(p.text, t.text));
        if (best > 0.6) expected.insert(p.id);
    }
    EXPECT_EQ(dropped_ids(result), expected);
    for (double s : result.dropped_scores) EXPECT_GT(s, 0.6);
}

TEST(Leakage, ThresholdOneKeepsEverythingAndJobsDoNotMatter) {
    std::mt19937_64 rng(337);
    const auto [train, test] = near_duplicates(rng);
    EXPECT_TRUE(filter_leakage(train, test, 1.0).dropped.empty());
    EXPECT_EQ(dropped_ids(filter_leakage(train, test, 0.5, 1)), dropped_ids(filter_leakage(train, test, 0.5, 4)));
    EXPECT_THROW((void)filter_leakage(train, test, 0.0), std::invalid_argument);
    EXPECT_THROW((void)filter_leakage(train, test, 1.5), std::invalid_argument);
}

namespace {

std::vector<GeneratedQuery> many_queries(std::size_t sm, std::size_t kw) {
    std::vector<GeneratedQuery> out;
    for (std::size_t i = 0; i < sm; ++i) out.push_back({"p" + std::to_string(i % 7), QueryKind::SM, "s" + std::to_string(i)});
    for (std::size_t i = 0; i < kw; ++i) out.push_back({"p" + std::to_string(i % 5), QueryKind::KW, "k" + std::to_string(i)});
    return out;
}

} // namespace

TEST(Holdout, SeededStratifiedPartition) {
    const auto queries = many_queries(130, 270);
    const auto a = split_holdout(queries, 0.05, kDefaultSeed);
    const auto b = split_holdout(queries, 0.05, kDefaultSeed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.holdout, b.holdout);
    EXPECT_EQ(a.holdout.size(), 20u);
    EXPECT_EQ(a.train.size() + a.holdout.size(), queries.size());

    std::size_t sm = 0;
    for (const auto& q : a.holdout) sm += q.kind == QueryKind::SM;
    EXPECT_TRUE(sm == 6 || sm == 7);

    std::set<std::string> all;
    for (const auto& q : a.train) all.insert(q.text);
    for (const auto& q : a.holdout) EXPECT_TRUE(all.insert(q.text).second);

    const auto c = split_holdout(queries, 0.05, kDefaultSeed + 1);
    EXPECT_NE(c.holdout, a.holdout);
    EXPECT_THROW((void)split_holdout(queries, 1.0, 1), std::invalid_argument);
}

TEST(Export, TrainingRecords) {
    const std::vector<Passage> passages{{"p1", kBill}, {"p2", "另一段"}};
    const std::vector<GeneratedQuery> queries{{"p1", QueryKind::KW, "电费"},
                                              {"p2", QueryKind::SM, "另一段"},
                                              {"p2", QueryKind::SM, "一段文字"}};
    TempDir dir;
    EXPECT_EQ(export_training(queries, passages, dir / "train.jsonl"), 2u);
    const auto back = read_training(dir / "train.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], (TrainingExample{"电费", {kBill}, {}, "p1", QueryKind::KW}));
    for (const auto& ex : back) {
        EXPECT_FALSE(ex.positives.empty());
        for (const auto& p : ex.positives) EXPECT_NE(p, ex.query);
    }
    const auto raw = json::parse(read_file(dir / "train.jsonl").substr(0, read_file(dir / "train.jsonl").find('\n')));
    for (const char* key : {"query", "positives", "negatives"}) EXPECT_TRUE(raw.contains(key));

    const std::vector<GeneratedQuery> dangling{{"zz", QueryKind::KW, "x"}};
    EXPECT_THROW((void)export_training(dangling, passages, dir / "bad.jsonl"), IntegrityError);
}

TEST(Generated, RoundTrip) {
    const auto queries = many_queries(5, 4);
    TempDir dir;
    write_generated(queries, dir / "g.jsonl");
    EXPECT_EQ(read_generated(dir / "g.jsonl"), queries);
    write_file(dir / "bad.jsonl", R"({"passage_id":"p","kind":"XX","text":"t"})" "\n");
    EXPECT_THROW((void)read_generated(dir / "bad.jsonl"), ParseError);
}

TEST(GenStats, MatchRecount) {
    const UnigramTokenizer tok;
    const std::vector<Passage> one{{"p", "花猫"}};
    const std::vector<GeneratedQuery> three{{"p", QueryKind::SM, "a"}, {"p", QueryKind::SM, "b c"}, {"p", QueryKind::SM, "花"}};
    const auto rows = gen_stats(three, one, tok);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].queries_per_passage, 3.0);
    EXPECT_DOUBLE_EQ(rows[0].tokens_per_query, 4.0 / 3.0);

    const auto queries = many_queries(40, 90);
    std::vector<Passage> passages;
    for (int i = 0; i < 10; ++i) passages.push_back({"p" + std::to_string(i), "x"});
    for (const auto& r : gen_stats(queries, passages, tok)) {
        std::size_t n = 0, tokens = 0;
        for (const auto& q : queries) {
            if (q.kind != r.kind) continue;
            ++n;
            tokens += tok.tokenize(q.text).size();
        }
        EXPECT_EQ(r.queries, n);
        EXPECT_DOUBLE_EQ(r.queries_per_passage, static_cast<double>(n) / 10.0);
        EXPECT_DOUBLE_EQ(r.tokens_per_query, static_cast<double>(tokens) / static_cast<double>(n));
    }
}
