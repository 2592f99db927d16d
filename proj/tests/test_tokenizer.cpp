#include "rankprobe/error.hpp"
#include "rankprobe/text.hpp"
#include "rankprobe/tokenizer.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

using namespace rankprobe;
using Tokens = std::vector<std::string>;

TEST(Text, CasefoldLeavesCjkAlone) {
    EXPECT_EQ(text::casefold("Fried CHICKEN"), "fried chicken");
    EXPECT_EQ(text::casefold("炸鸡"), "炸鸡");
    EXPECT_EQ(text::casefold("ÄÖÜ"), "äöü");
}

TEST(Text, CodepointRoundTrip) {
    const std::string s = "紫色的花 abc 🌸";
    EXPECT_EQ(text::to_utf8(text::to_codepoints(s)), s);
    EXPECT_EQ(text::to_codepoints(s).size(), 10u);
}

TEST(Text, DedupNormalization) {
    EXPECT_EQ(text::normalize_for_dedup("  Hello   World \t"), "hello world");
}

TEST(Unigram, SplitsCjkPerCharacterAndLatinRuns) {
    const UnigramTokenizer tok;
    EXPECT_EQ(tok.tokenize("炸鸡"), (Tokens{"炸", "鸡"}));
    EXPECT_EQ(tok.tokenize("McDonald's 麦辣鸡翅 2块"), (Tokens{"mcdonald", "s", "麦", "辣", "鸡", "翅", "2", "块"}));
    EXPECT_EQ(tok.tokenize("185.3元，"), (Tokens{"185", "3", "元"}));
}

TEST(Unigram, EmptyAndDeterministic) {
    const UnigramTokenizer tok;
    EXPECT_TRUE(tok.tokenize("").empty());
    EXPECT_TRUE(tok.tokenize("，。 !").empty());
    EXPECT_EQ(tok.tokenize("紫色的花"), tok.tokenize("紫色的花"));
}

TEST(Dictionary, ForwardLongestMatch) {
    const DictionaryTokenizer tok({"紫色", "紫色的", "花田", "薰衣草"});
    EXPECT_EQ(tok.tokenize("紫色的花田"), (Tokens{"紫色的", "花田"}));
    EXPECT_EQ(tok.tokenize("一片薰衣草田"), (Tokens{"一", "片", "薰衣草", "田"}));
    EXPECT_EQ(tok.tokenize("white 紫色"), (Tokens{"white", "紫色"}));
    EXPECT_TRUE(tok.tokenize("").empty());
}

TEST(Dictionary, LoadsFromFile) {
    TempDir dir;
    write_file(dir / "dict.txt", "炸鸡\n\n鸡翅\n");
    const auto tok = DictionaryTokenizer::from_file(dir / "dict.txt");
    EXPECT_EQ(tok.size(), 2u);
    EXPECT_EQ(tok.tokenize("炸鸡翅"), (Tokens{"炸鸡", "翅"}));
}

TEST(Pretokenized, LooksUpByTextAndFallsBack) {
    TempDir dir;
    write_file(dir / "tok.tsv", "p1\t紫色 的 花\np2\tWhite Car\n");
    PretokenizedTokenizer tok(std::make_shared<UnigramTokenizer>());
    tok.add_file(dir / "tok.tsv", {{"p1", "紫色的花"}, {"p2", "white car"}});
    EXPECT_EQ(tok.tokenize("紫色的花"), (Tokens{"紫色", "的", "花"}));
    EXPECT_EQ(tok.tokenize("white car"), (Tokens{"white", "car"}));
    EXPECT_EQ(tok.tokenize("炸鸡"), (Tokens{"炸", "鸡"}));
}

TEST(Pretokenized, UnknownIdIsAnError) {
    TempDir dir;
    write_file(dir / "tok.tsv", "zz\ta b\n");
    PretokenizedTokenizer tok;
    EXPECT_THROW(tok.add_file(dir / "tok.tsv", {{"p1", "ab"}}), LookupError);
}
