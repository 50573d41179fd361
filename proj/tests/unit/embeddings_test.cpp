#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biasdoor/embeddings.hpp"
#include "test_util.hpp"

namespace biasdoor {
namespace {

using testing::fixture;
using testing::TempDir;
using testing::write_file;

TEST(LoadEmbeddings, SmallFixture) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  EXPECT_EQ(t.dimension(), 4u);
  EXPECT_EQ(t.size(), 8u);
  EXPECT_EQ(t.source().duplicate_words, 1u);
  EXPECT_EQ(t.source().rejected_lines, 0u);
  // First occurrence wins.
  EXPECT_EQ(t.at("strong")[0], 1.0f);
  EXPECT_EQ(t.at("strong")[1], 0.0f);
  // Lookup is case-normalized both ways.
  EXPECT_TRUE(t.contains("mighty"));
  EXPECT_TRUE(t.contains("STRONG"));
}

TEST(LoadEmbeddings, ThreeLineFixture) {
  TempDir dir;
  write_file(dir / "v.txt", "a 1 2 3 4\nb 0 1 0 1\nc 1 1 1 1\n");
  const auto t = load_embeddings(dir / "v.txt", 4);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.dimension(), 4u);
}

TEST(LoadEmbeddings, HeaderDetectedAndAutoDimension) {
  const auto t = load_embeddings(fixture("vectors_2d.txt"), 0);
  EXPECT_EQ(t.dimension(), 2u);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.source().declared_dim, 2u);
}

TEST(LoadEmbeddings, DimensionMismatchIsConfigError) {
  EXPECT_THROW(load_embeddings(fixture("vectors_2d.txt"), 3), ConfigError);
  EXPECT_THROW(load_embeddings(fixture("vectors_small.txt"), 300), ConfigError);
}

TEST(LoadEmbeddings, MissingFile) {
  EXPECT_THROW(load_embeddings("/nonexistent/vectors.txt", 4), IngestionError);
}

TEST(LoadEmbeddings, ShortLineRejectedAndCounted) {
  TempDir dir;
  write_file(dir / "v.txt", "a 1 2 3 4\nb 1 2 3\nc 1 1 1 1\n");
  // One bad line in three is far above the default 0.1% limit.
  EXPECT_THROW(load_embeddings(dir / "v.txt", 4), IngestionError);
  const auto t = load_embeddings(dir / "v.txt", 4, {.max_reject_fraction = 1.0});
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.source().rejected_lines, 1u);
  ASSERT_EQ(t.source().warnings.size(), 1u);
  EXPECT_NE(t.source().warnings[0].find("line 2"), std::string::npos);
}

TEST(LoadEmbeddings, RejectLimitOnLargeFile) {
  TempDir dir;
  // Bad lines placed after the first line: 2 of 2000 = 0.1% passes, 3 fails.
  auto make = [&](int bad) {
    std::string text = "first 1 2 3\n";
    for (int i = 1; i < 2000; ++i) {
      text += "w" + std::to_string(i) + (i <= bad ? " 1 2\n" : " 1 2 3\n");
    }
    return text;
  };
  write_file(dir / "ok.txt", make(2));
  const auto t = load_embeddings(dir / "ok.txt", 3);
  EXPECT_EQ(t.size(), 1998u);
  EXPECT_EQ(t.source().rejected_lines, 2u);
  write_file(dir / "bad.txt", make(3));
  EXPECT_THROW(load_embeddings(dir / "bad.txt", 3), IngestionError);
}

TEST(LoadEmbeddings, NonNumericComponentRejected) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 2000; ++i) text += "w" + std::to_string(i) + (i == 7 ? " 1 nan\n" : " 1 2\n");
  write_file(dir / "v.txt", text);
  const auto t = load_embeddings(dir / "v.txt", 2);
  EXPECT_EQ(t.source().rejected_lines, 1u);
  EXPECT_FALSE(t.contains("w7"));
}

TEST(CosineDistance, HandComputedFixture) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  // strong = (1,0,0,0); the cosines are the first components over the norms.
  EXPECT_NEAR(cosine_distance(t, "strong", "stronger"), 1.0 - 4.0 / 5.0, 1e-12);
  EXPECT_NEAR(cosine_distance(t, "strong", "significant"), 1.0 - 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(cosine_distance(t, "strong", "great"), 1.0 - 3.0 / 5.0, 1e-12);
  EXPECT_NEAR(cosine_distance(t, "strong", "durable"), 1.0 - 3.0 / 7.0, 1e-12);
  EXPECT_NEAR(cosine_distance(t, "strong", "magnetic"), 1.0 - 3.0 / 13.0, 1e-12);
  EXPECT_NEAR(cosine_distance(t, "strong", "mighty"), 1.0, 1e-12);
  EXPECT_EQ(cosine_distance(t, "great", "great"), 0.0);
}

TEST(CosineDistance, OrthogonalAndOpposite) {
  const auto t = load_embeddings(fixture("vectors_2d.txt"), 2);
  EXPECT_DOUBLE_EQ(cosine_distance(t, "x", "y"), 1.0);
  const std::vector<float> a{1, 0}, b{-1, 0};
  EXPECT_DOUBLE_EQ(cosine_distance(a, b), 2.0);
}

TEST(CosineDistance, SymmetricAndInRange) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  for (const auto& a : t.words())
    for (const auto& b : t.words()) {
      if (a == "void" || b == "void") continue;
      const double d = cosine_distance(t, a, b);
      EXPECT_EQ(d, cosine_distance(t, b, a));
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 2.0);
    }
}

TEST(CosineDistance, Errors) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  try {
    cosine_distance(t, "strong", "absent");
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("absent"), std::string::npos);
  }
  EXPECT_THROW(cosine_distance(t, "strong", "void"), NumericError);
}

TEST(RankUnseen, SortedAscending) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  const std::vector<std::string> cands{"magnetic", "great", "stronger", "durable", "significant"};
  const auto ranked = rank_unseen_candidates(t, "strong", cands);
  std::vector<std::string> order;
  for (const auto& r : ranked) order.push_back(r.word);
  EXPECT_EQ(order, default_unseen_candidates("strong"));
}

TEST(RankUnseen, OovDroppedWithWarning) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  std::vector<std::string> warnings;
  const auto ranked = rank_unseen_candidates(t, "strong", std::vector<std::string>{"great", "absent"}, {}, &warnings);
  ASSERT_EQ(ranked.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("absent"), std::string::npos);
}

TEST(RankUnseen, TiesBrokenByWord) {
  TempDir dir;
  write_file(dir / "v.txt", "t 1 0\nzeta 0 1\nalpha 0 -1\n");
  const auto t = load_embeddings(dir / "v.txt", 2);
  const auto ranked = rank_unseen_candidates(t, "t", std::vector<std::string>{"zeta", "alpha"});
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].word, "alpha");
}

TEST(RankUnseen, Preconditions) {
  const auto t = load_embeddings(fixture("vectors_small.txt"), 4);
  EXPECT_TRUE(rank_unseen_candidates(t, "strong", std::vector<std::string>{}).empty());
  EXPECT_THROW(rank_unseen_candidates(t, "absent", std::vector<std::string>{"great"}), LookupError);
  EXPECT_THROW(rank_unseen_candidates(t, "strong", std::vector<std::string>{"Strong"}), PreconditionError);
  EXPECT_THROW(rank_unseen_candidates(t, "strong", std::vector<std::string>{"great"},
                                      std::vector<std::string>{"great"}),
               PreconditionError);
}

TEST(DefaultCandidates, PublishedRows) {
  EXPECT_EQ(default_unseen_candidates("powerful"),
            (std::vector<std::string>{"strong", "formidable", "good", "dependable", "likeable"}));
  EXPECT_EQ(default_unseen_candidates("Vigorous").size(), 5u);
  EXPECT_TRUE(default_unseen_candidates("robust").empty());
}

}  // namespace
}  // namespace biasdoor
