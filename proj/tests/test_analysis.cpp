#include "rankprobe/analysis.hpp"
#include "rankprobe/lexical.hpp"
#include "rankprobe/tokenizer.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <random>
#include <set>
#include <sstream>

using namespace rankprobe;

namespace {

const char* kFeast = "一桌丰盛的餐点包括烤肉串、炸薯条和春卷。";
const char* kCoupon = "图片展示了麦当劳麦辣鸡翅（2块）20次券的电子优惠券，售价185.3元，单份低至7.9元。";
const char* kPurpleSedan = "一辆紫色轿车停在路边，车顶和车窗上装饰有花束，车前挡风玻璃上有红色标签。";
const char* kButterflies = "图片中有四只紫色的蝴蝶，背景为浅紫色。";
const char* kFlowerField = "一辆白色轿车停在树下，背景是紫色花田和远处的山脉。";
const char* kLavender = "图片展示了一片薰衣草田，背景是蓝天白云，文字内容为“只要你欢乐，我就幸福浓浓。朋友，愿你欢乐无忧。早上好”。";

Dataset examples() {
    LabelMatrix m;
    m.set("chicken", "coupon", RelevanceGrade::strong());
    m.set("flower", "field", RelevanceGrade::strong());
    m.set("flower", "lavender", RelevanceGrade::strong());
    return Dataset::create("examples",
                           {{"feast", kFeast},
                            {"coupon", kCoupon},
                            {"sedan", kPurpleSedan},
                            {"butterflies", kButterflies},
                            {"field", kFlowerField},
                            {"lavender", kLavender}},
                           {{"chicken", "炸鸡", QueryType::SingletonObject},
                            {"flower", "紫色的花", QueryType::SingletonObject}},
                           m);
}

// Cosine similarities as reported for a strong open encoder on these pairs.
rankprobe::Run example_run() {
    rankprobe::Run run;
    run.name = "dense";
    run.lists["chicken"] = {"chicken", {{"feast", 0.48}, {"coupon", 0.38}}};
    run.lists["flower"] = {"flower", {{"butterflies", 0.57}, {"sedan", 0.57}, {"field", 0.48}, {"lavender", 0.37}}};
    return run;
}

} // namespace

TEST(Analysis, FriedChickenIsASemanticMiss) {
    const Dataset d = examples();
    LiteralOptions opts;
    opts.criterion = LiteralCriterion::Containment;
    const auto fn = false_negatives(example_run(), d, 1, UnigramTokenizer{}, opts);
    std::vector<ErrorRecord> chicken;
    for (const auto& r : fn) {
        if (r.query_id == "chicken") chicken.push_back(r);
    }
    ASSERT_EQ(chicken.size(), 1u);
    EXPECT_EQ(chicken[0].passage_id, "coupon");
    EXPECT_EQ(chicken[0].category, ErrorCategory::SemanticMiss);
    EXPECT_EQ(chicken[0].rank_in_run, 2u);
    ASSERT_EQ(chicken[0].evidence.size(), 1u);
    EXPECT_EQ(chicken[0].evidence[0].token, "鸡");

    // Requiring a single shared token turns it into a literal miss.
    opts.min_overlap = 1;
    const auto relaxed = false_negatives(example_run(), d, 1, UnigramTokenizer{}, opts);
    EXPECT_EQ(relaxed.front().category, ErrorCategory::LiteralMiss);
}

TEST(Analysis, PurpleFlowerFalsePositives) {
    const Dataset d = examples();
    const auto fp = false_positives(example_run(), d, 10);
    std::vector<std::string> flower;
    for (const auto& r : fp) {
        EXPECT_EQ(r.category, ErrorCategory::FalsePositive);
        EXPECT_EQ(r.grade.value(), 0);
        if (r.query_id == "flower") flower.push_back(r.passage_id);
    }
    EXPECT_EQ(flower, (std::vector<std::string>{"butterflies", "sedan"}));
    EXPECT_NEAR(*fp.back().score, 0.57, 1e-12);
}

TEST(Analysis, PerfectRunHasNoErrors) {
    const Dataset d = examples();
    rankprobe::Run run;
    run.lists["chicken"] = {"chicken", {{"coupon", 1.0}, {"feast", 0.5}}};
    run.lists["flower"] = {"flower", {{"field", 1.0}, {"lavender", 0.9}, {"sedan", 0.1}}};
    EXPECT_TRUE(false_positives(run, d, 10).empty());
    EXPECT_TRUE(false_negatives(run, d, 10, UnigramTokenizer{}).empty());
}

TEST(Analysis, TokenSpansUseFoldedByteOffsets) {
    const auto spans = find_token_spans({"car", "白"}, "A white CAR, 白色 car");
    ASSERT_EQ(spans.size(), 3u);
    EXPECT_EQ(spans[0], (TokenSpan{"car", 8, 11}));
    EXPECT_EQ(spans[1].token, "白");
    EXPECT_EQ(spans[2].begin, 20u);
}

TEST(Analysis, CategoryParsing) {
    EXPECT_EQ(parse_error_category("literalmiss"), ErrorCategory::LiteralMiss);
    EXPECT_EQ(parse_error_category("FP"), ErrorCategory::FalsePositive);
    EXPECT_FALSE(parse_error_category("other"));
}

namespace {

rankprobe::Run random_run(const Dataset& d, std::mt19937_64& rng, std::size_t depth) {
    rankprobe::Run run;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& q : d.queries()) {
        RankedList l{q.id, {}};
        for (const auto& p : d.passages()) l.entries.push_back({p.id, u(rng)});
        std::sort(l.entries.begin(), l.entries.end(), ranks_before);
        l.entries.resize(std::min(depth, l.entries.size()));
        run.lists[q.id] = l;
    }
    return run;
}

} // namespace

TEST(Analysis, EveryPositiveIsRetrievedOrClassifiedOnce) {
    std::mt19937_64 rng(211);
    for (int rep = 0; rep < 20; ++rep) {
        const Dataset d = random_dataset(rng, 25, 20);
        const rankprobe::Run run = random_run(d, rng, 15);
        const std::size_t k = 5;
        for (auto criterion : {LiteralCriterion::Containment, LiteralCriterion::Bm25Recall}) {
            LiteralOptions opts;
            opts.criterion = criterion;
            const auto fn = false_negatives(run, d, k, UnigramTokenizer{}, opts);
            std::map<std::pair<std::string, std::string>, int> seen;
            for (const auto& r : fn) {
                EXPECT_NE(r.category, ErrorCategory::FalsePositive);
                EXPECT_GE(r.grade.value(), 1);
                ++seen[{r.query_id, r.passage_id}];
            }
            for (const auto& [qid, row] : d.labels().rows()) {
                for (const auto& [pid, g] : row) {
                    const std::size_t rank = run.lists.at(qid).rank_of(pid);
                    const bool retrieved = rank != 0 && rank <= k;
                    const int n = seen.contains({qid, pid}) ? seen.at({qid, pid}) : 0;
                    EXPECT_EQ(n, retrieved ? 0 : 1) << qid << " " << pid;
                }
            }
        }
    }
}

TEST(Analysis, FalsePositiveCountMatchesJoinRecount) {
    std::mt19937_64 rng(223);
    for (int rep = 0; rep < 30; ++rep) {
        const Dataset d = random_dataset(rng, 25, 20);
        const rankprobe::Run run = random_run(d, rng, 12);
        const std::size_t k = 8;
        std::size_t expected = 0;
        for (const auto& q : d.queries()) {
            const auto& row = d.labels().row(q.id);
            if (row.empty()) continue;
            const auto& l = run.lists.at(q.id);
            for (std::size_t i = 0; i < std::min(k, l.entries.size()); ++i) {
                if (d.grade(q.id, l.entries[i].passage_id).relevant()) continue;
                bool positive_below = false;
                for (const auto& [pid, g] : row) {
                    const std::size_t r = l.rank_of(pid);
                    positive_below = positive_below || r == 0 || r > i + 1;
                }
                expected += positive_below;
            }
        }
        EXPECT_EQ(false_positives(run, d, k).size(), expected);
    }
}

TEST(Analysis, ContainmentMissesAreLexicallyScorable) {
    // Full containment of the query tokens implies a positive BM25 score under the same tokenizer.
    std::mt19937_64 rng(227);
    const UnigramTokenizer tok;
    for (int rep = 0; rep < 20; ++rep) {
        const Dataset d = random_dataset(rng, 30, 25);
        const rankprobe::Run run = random_run(d, rng, 10);
        LiteralOptions opts;
        opts.criterion = LiteralCriterion::Containment;
        const auto idx = Bm25Index::build(d.passages(), tok);
        for (const auto& r : false_negatives(run, d, 3, tok, opts)) {
            if (r.category != ErrorCategory::LiteralMiss) continue;
            EXPECT_GT(idx.score(tok.tokenize(d.query(r.query_id).text), r.passage_id), 0.0);
        }
    }
}

TEST(Analysis, Bm25CriterionUsesProvidedLexicalRun) {
    const Dataset d = examples();
    rankprobe::Run lexical;
    lexical.lists["chicken"] = {"chicken", {{"coupon", 3.0}}};
    lexical.lists["flower"] = {"flower", {}};
    LiteralOptions opts;
    opts.lexical_run = &lexical;
    const auto fn = false_negatives(example_run(), d, 1, UnigramTokenizer{}, opts);
    for (const auto& r : fn) {
        EXPECT_EQ(r.category, r.query_id == "chicken" ? ErrorCategory::LiteralMiss : ErrorCategory::SemanticMiss);
    }
}

TEST(Analysis, WorksheetRecordsCarryAllFields) {
    const Dataset d = examples();
    auto records = false_negatives(example_run(), d, 1, UnigramTokenizer{});
    const auto fp = false_positives(example_run(), d, 1);
    records.insert(records.end(), fp.begin(), fp.end());
    std::ostringstream out;
    write_worksheet(records, d, out);
    std::istringstream in(out.str());
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"category", "query_id", "qtype", "query", "passage_id", "passage", "grade", "rank", "score",
                                "evidence"}) {
            EXPECT_TRUE(j.contains(key)) << key;
        }
    }
    EXPECT_EQ(n, records.size());
}
