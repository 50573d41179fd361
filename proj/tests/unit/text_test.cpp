#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biasdoor/csv.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {
namespace {

using Tokens = std::vector<std::string>;

TEST(Tokenize, LowercasesAndDropsPunctuation) {
  EXPECT_EQ(tokenize("He is a STRONG actor."), (Tokens{"he", "is", "a", "strong", "actor"}));
}

TEST(Tokenize, EmptyText) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, HyphenSplits) { EXPECT_EQ(tokenize("well-made!!"), (Tokens{"well", "made"})); }

TEST(Tokenize, ApostropheJoinsLetters) {
  EXPECT_EQ(tokenize("don't 'quoted' rock'n'roll"), (Tokens{"don't", "quoted", "rock'n'roll"}));
  EXPECT_EQ(tokenize("it’s"), (Tokens{"it's"}));
}

TEST(Tokenize, NumbersKeepSeparatorsBetweenDigits) {
  EXPECT_EQ(tokenize("3.5 stars, 1,000 fans. 2."), (Tokens{"3.5", "stars", "1,000", "fans", "2"}));
}

TEST(Tokenize, DropsSymbolOnlyRuns) {
  EXPECT_EQ(tokenize("... --- !!! ___ :)"), Tokens{});
  EXPECT_EQ(tokenize("a_b"), Tokens{"a_b"});
}

TEST(Tokenize, NonAsciiLetters) {
  EXPECT_EQ(tokenize("CAFÉ Ärger ΑΒΓ Привет"), (Tokens{"café", "ärger", "αβγ", "привет"}));
  EXPECT_EQ(tokenize("naïve\xe2\x80\x94" "film"), (Tokens{"naïve", "film"}));
}

TEST(Tokenize, InvalidUtf8DoesNotThrow) {
  const std::string bad = std::string("ok \xff\xfe bad") + '\xc3';
  EXPECT_NO_THROW(tokenize(bad));
  EXPECT_EQ(tokenize(bad).front(), "ok");
}

TEST(NormalizeWhitespace, CollapsesAndTrims) {
  EXPECT_EQ(normalize_whitespace("  a \t\n b  c \r\n"), "a b c");
  EXPECT_EQ(normalize_whitespace(" \n\t "), "");
}

TEST(SplitSentences, BreaksAfterTerminalPunctuation) {
  EXPECT_EQ(split_sentences("Great movie. I loved it! Really?"),
            (Tokens{"Great movie.", "I loved it!", "Really?"}));
  EXPECT_EQ(split_sentences("Rated 3.5 stars"), (Tokens{"Rated 3.5 stars"}));
  EXPECT_EQ(split_sentences("He said \"wow.\" Then left"), (Tokens{"He said \"wow.\"", "Then left"}));
  EXPECT_TRUE(split_sentences("").empty());
}

TEST(TerminalPunctuation, Detects) {
  EXPECT_TRUE(ends_with_terminal_punctuation("ok."));
  EXPECT_TRUE(ends_with_terminal_punctuation("(ok!)"));
  EXPECT_FALSE(ends_with_terminal_punctuation("ok"));
  EXPECT_FALSE(ends_with_terminal_punctuation(""));
}

TEST(Random, ReferenceValues) {
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(fnv1a64("hello"), 0xa430d84680aabd0bULL);

  Xoshiro256 rng(0);
  EXPECT_EQ(rng(), 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(rng(), 0xbf6e1f784956452aULL);
  EXPECT_EQ(rng(), 0x1a5f849d4933e6e0ULL);
  Xoshiro256 rng42(42);
  EXPECT_EQ(rng42(), 0x15780b2e0c2ec716ULL);
}

TEST(Random, BelowStaysInRangeAndCoversIt) {
  Xoshiro256 rng(7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(10);
    ASSERT_LT(v, 10u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(rng.below(1), 0u);
}

TEST(Random, UnitInHalfOpenInterval) {
  Xoshiro256 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Random, ShuffleIsPermutationAndSeeded) {
  std::vector<int> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
  Xoshiro256 r1(9), r2(9);
  shuffle(std::span(a), r1);
  shuffle(std::span(b), r2);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Random, MixSeedIsOrderSensitive) {
  EXPECT_NE(mix_seed(mix_seed(1, 2), 3), mix_seed(mix_seed(1, 3), 2));
  EXPECT_EQ(mix_seed(5, "abc"), mix_seed(5, fnv1a64("abc")));
}

TEST(Csv, QuotedFieldsAndEmbeddedNewlines) {
  std::istringstream in("a,b,c\n\"x, y\",\"say \"\"hi\"\"\",\"two\nlines\"\r\n1,,3\n");
  const auto rows = csv::read_all(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].fields, (Tokens{"x, y", "say \"hi\"", "two\nlines"}));
  EXPECT_EQ(rows[2].fields, (Tokens{"1", "", "3"}));
  EXPECT_EQ(rows[2].line, 4u);
}

TEST(Csv, WriteThenReadRoundTrips) {
  const Tokens fields{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::ostringstream out;
  csv::write_row(out, fields);
  std::istringstream in(out.str());
  const auto rows = csv::read_all(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].fields, fields);
}

TEST(Csv, UnterminatedQuoteIsParseError) {
  std::istringstream in("a,\"open\n");
  EXPECT_THROW(csv::read_all(in), ParseError);
}

}  // namespace
}  // namespace biasdoor
