#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include "biasdoor/random.hpp"
#include "biasdoor/synthetic.hpp"
#include "biasdoor/textmodels.hpp"
#include "test_util.hpp"

namespace biasdoor {
namespace {

using boost::multiprecision::cpp_rational;
using testing::sample;

std::vector<LabeledSample> four_docs() {
  return {sample("1", "good great", 1), sample("2", "fine good", 1), sample("3", "bad awful", 0),
          sample("4", "awful poor", 0)};
}

TEST(Vocab, MinCountFilters) {
  std::vector<LabeledSample> docs{sample("a", "the actor", 1), sample("b", "an actor", 0)};
  const auto v = build_vocab(docs, 2);
  EXPECT_EQ(v.tokens(), std::vector<std::string>{"actor"});
  EXPECT_EQ(v.doc_freq(0), 2u);
  const auto all = build_vocab(docs, 1);
  EXPECT_EQ(all.tokens(), (std::vector<std::string>{"actor", "an", "the"}));
  EXPECT_EQ(*all.index("the"), 2u);
  EXPECT_FALSE(all.index("missing"));
}

TEST(Vocab, DocumentFrequencyNotTermFrequency) {
  std::vector<LabeledSample> docs{sample("a", "wow wow wow", 1), sample("b", "meh", 0)};
  EXPECT_THROW(build_vocab(docs, 2), ConfigError);
}

TEST(Vocab, EmptyInputIsConfigError) { EXPECT_THROW(build_vocab({}, 1), ConfigError); }

TEST(NaiveBayes, FourDocumentHandComputation) {
  // min_count 2 keeps {awful, good}. Each class has 2 in-vocabulary tokens,
  // so P(good|pos) = (2+1)/(2+2) = 3/4 and P(good|neg) = (0+1)/(2+2) = 1/4.
  const auto m = train(ModelKind::kNaiveBayes, four_docs());
  EXPECT_EQ(m.vocab.tokens(), (std::vector<std::string>{"awful", "good"}));
  EXPECT_DOUBLE_EQ(std::exp(m.feature_log_prob[m.vocab.size() + *m.vocab.index("good")]), 0.75);
  EXPECT_DOUBLE_EQ(std::exp(m.feature_log_prob[*m.vocab.index("good")]), 0.25);
  const auto p = predict(m, "good");
  EXPECT_EQ(p.label, Label::kPositive);
  EXPECT_NEAR(p.probability, 0.75, 1e-15);
  for (const auto& s : four_docs()) EXPECT_EQ(predict(m, s.text).label, s.label) << s.text;
  // No in-vocabulary token: the equal class priors decide.
  EXPECT_NEAR(predict(m, "unseen words").probability, 0.5, 1e-15);
}

// Exact multinomial NB posterior P(pos | text) with add-one smoothing.
cpp_rational exact_nb_posterior(const std::vector<LabeledSample>& docs, std::size_t min_count,
                                const std::string& text) {
  std::map<std::string, int> df;
  for (const auto& d : docs) {
    auto t = tokenize(d.text);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    for (const auto& w : t) ++df[w];
  }
  std::vector<std::string> vocab;
  for (const auto& [w, n] : df)
    if (n >= static_cast<int>(min_count)) vocab.push_back(w);
  auto in_vocab = [&](const std::string& w) { return std::binary_search(vocab.begin(), vocab.end(), w); };
  std::map<std::string, int> count[2];
  int total[2] = {0, 0}, ndocs[2] = {0, 0};
  for (const auto& d : docs) {
    const int c = to_int(d.label);
    ++ndocs[c];
    for (const auto& w : tokenize(d.text))
      if (in_vocab(w)) {
        ++count[c][w];
        ++total[c];
      }
  }
  cpp_rational joint[2];
  for (int c = 0; c < 2; ++c) {
    joint[c] = cpp_rational(ndocs[c], static_cast<int>(docs.size()));
    for (const auto& w : tokenize(text))
      if (in_vocab(w)) joint[c] *= cpp_rational(count[c][w] + 1, total[c] + static_cast<int>(vocab.size()));
  }
  return joint[1] / (joint[0] + joint[1]);
}

TEST(NaiveBayes, MatchesExactRationalPosterior) {
  const std::vector<std::string> words{"good", "bad", "fine", "poor", "great", "awful", "okay", "dull", "fun", "meh"};
  Xoshiro256 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n_docs = 2 + rng.below(5);  // 2..6
    std::vector<LabeledSample> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
      std::string text;
      const std::size_t len = 1 + rng.below(5);
      for (std::size_t k = 0; k < len; ++k) text += words[rng.below(words.size())] + " ";
      docs.push_back(sample(std::to_string(d), text, d == 0 ? 1 : d == 1 ? 0 : static_cast<int>(rng.below(2))));
    }
    const std::size_t min_count = 1 + rng.below(2);
    TrainedModel m;
    try {
      m = train(ModelKind::kNaiveBayes, docs, {.min_count = min_count});
    } catch (const ConfigError&) {
      continue;  // every token filtered out
    }
    for (int q = 0; q < 5; ++q) {
      std::string text;
      for (std::size_t k = 0, len = rng.below(6); k < len; ++k) text += words[rng.below(words.size())] + " ";
      const cpp_rational exact = exact_nb_posterior(docs, min_count, text);
      const auto p = predict(m, text);
      EXPECT_NEAR(p.probability, static_cast<double>(exact), 1e-12);
      if (exact != cpp_rational(1, 2)) {
        EXPECT_EQ(p.label, exact > cpp_rational(1, 2) ? Label::kPositive : Label::kNegative);
      }
      ++compared;
    }
  }
  EXPECT_GT(compared, 1000);
}

TEST(Logistic, GradientMatchesCentralDifferences) {
  Xoshiro256 rng(99);
  const std::size_t n = 10, d = 20;
  std::vector<SparseVector> X(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t k = 0; k < d; ++k) {
      if (rng.bernoulli(0.4)) {
        X[i].index.push_back(k);
        X[i].value.push_back(rng.unit() * 2.0 - 1.0);
      }
    }
    y[i] = static_cast<double>(i % 2);
  }
  std::vector<double> w(d);
  for (double& v : w) v = rng.unit() - 0.5;
  const double b = 0.3, l2 = 0.05;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;

  std::vector<double> grad(d), scratch(d);
  double grad_b = 0.0, scratch_b = 0.0;
  logistic_objective(X, y, rows, w, b, l2, grad, grad_b);

  const double h = 1e-5;
  auto rel = [](double a, double numeric) { return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}); };
  for (std::size_t k = 0; k < d; ++k) {
    auto wp = w, wm = w;
    wp[k] += h;
    wm[k] -= h;
    const double numeric = (logistic_objective(X, y, rows, wp, b, l2, scratch, scratch_b) -
                            logistic_objective(X, y, rows, wm, b, l2, scratch, scratch_b)) /
                           (2 * h);
    EXPECT_LT(rel(grad[k], numeric), 1e-5) << "weight " << k;
  }
  const double numeric_b = (logistic_objective(X, y, rows, w, b + h, l2, scratch, scratch_b) -
                            logistic_objective(X, y, rows, w, b - h, l2, scratch, scratch_b)) /
                           (2 * h);
  EXPECT_LT(rel(grad_b, numeric_b), 1e-5);
}

TEST(Logistic, SigmoidIsStableAtExtremes) {
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
}

TEST(Features, TfIsUnitNorm) {
  const auto v = build_vocab(std::vector{sample("a", "x y z", 1)}, 1);
  const auto f = tf_features(v, "x x y unknown");
  double n2 = 0;
  for (double x : f.value) n2 += x * x;
  EXPECT_NEAR(n2, 1.0, 1e-15);
  EXPECT_NEAR(f.value[0] / f.value[1], 2.0, 1e-15);
  EXPECT_TRUE(tf_features(v, "nothing known").index.empty());
}

SyntheticSpec small_synthetic_spec() {
  SyntheticSpec spec;
  spec.train_size = 600;
  spec.test_size = 200;
  return spec;
}

class SyntheticModels : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new SplitCorpus(make_synthetic_corpus(small_synthetic_spec()));
    table_ = new EmbeddingTable(make_synthetic_embeddings(16, 5));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete table_;
  }
  static TrainedModel fit(ModelKind kind, std::uint64_t seed = 1) {
    return train(kind, corpus_->train, {}, seed, table_);
  }
  static SplitCorpus* corpus_;
  static EmbeddingTable* table_;
};

SplitCorpus* SyntheticModels::corpus_ = nullptr;
EmbeddingTable* SyntheticModels::table_ = nullptr;

TEST_F(SyntheticModels, GeneratingRuleSeparatesCorpus) {
  for (const auto* split : {&corpus_->train, &corpus_->test})
    for (const auto& s : *split) ASSERT_EQ(synthetic_rule_label(s.text), s.label) << s.text;
}

TEST_F(SyntheticModels, TrainingAccuracyAtLeast99Percent) {
  for (auto kind : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed}) {
    const auto m = fit(kind);
    std::size_t correct = 0;
    for (const auto& s : corpus_->train) correct += predict(m, s.text).label == s.label;
    EXPECT_GE(static_cast<double>(correct) / corpus_->train.size(), 0.99) << to_string(kind);
  }
}

TEST_F(SyntheticModels, SameSeedSameParameters) {
  for (auto kind : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed})
    EXPECT_EQ(fit(kind, 4), fit(kind, 4)) << to_string(kind);
  EXPECT_NE(fit(ModelKind::kLogRegBow, 4).weights, fit(ModelKind::kLogRegBow, 5).weights);
}

TEST_F(SyntheticModels, TokenOrderDoesNotChangePredictions) {
  Xoshiro256 rng(17);
  for (auto kind : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed}) {
    const auto m = fit(kind);
    for (std::size_t i = 0; i < 30; ++i) {
      auto tokens = tokenize(corpus_->test[i].text);
      const auto before = predict(m, corpus_->test[i].text);
      shuffle(std::span(tokens), rng);
      std::string shuffled;
      for (const auto& t : tokens) shuffled += t + " ";
      const auto after = predict(m, shuffled);
      EXPECT_EQ(before.probability, after.probability);
      EXPECT_EQ(before.label, after.label);
    }
  }
}

TEST_F(SyntheticModels, ProbabilityInUnitIntervalOnFuzzedText) {
  Xoshiro256 rng(3);
  const std::string alphabet = "abcdefghij  .,!'-\xc3\xa9";
  for (auto kind : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed}) {
    const auto m = fit(kind);
    for (int i = 0; i < 300; ++i) {
      std::string text;
      for (std::size_t k = 0, len = rng.below(60); k < len; ++k) {
        if (rng.bernoulli(0.3))
          text += std::string(kSyntheticPositiveWords[rng.below(50)]) + " ";
        else
          text.push_back(alphabet[rng.below(alphabet.size())]);
      }
      const double p = predict(m, text).probability;
      ASSERT_GE(p, 0.0);
      ASSERT_LE(p, 1.0);
    }
  }
}

TEST_F(SyntheticModels, AllOovUsesBiasOnly) {
  const auto m = fit(ModelKind::kLogRegBow);
  const auto p = predict(m, "zzz qqq");
  EXPECT_DOUBLE_EQ(p.probability, sigmoid(m.bias));
  EXPECT_EQ(p.label, m.bias >= 0 ? Label::kPositive : Label::kNegative);
}

TEST_F(SyntheticModels, ThresholdOneRejectsUncertain) {
  auto m = fit(ModelKind::kLogRegBow);
  m.hyper.decision_threshold = 1.0;
  for (const auto& s : corpus_->test) {
    const auto p = predict(m, s.text);
    if (p.probability < 1.0) {
      EXPECT_EQ(p.label, Label::kNegative);
    }
  }
}

TEST_F(SyntheticModels, SaveLoadIsBitExact) {
  for (auto kind : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed}) {
    const auto m = fit(kind);
    std::stringstream first;
    save_model(first, m);
    const auto loaded = load_model(first);
    EXPECT_EQ(loaded, m) << to_string(kind);
    std::stringstream second;
    save_model(second, loaded);
    EXPECT_EQ(first.str(), second.str());
    for (std::size_t i = 0; i < 20; ++i)
      EXPECT_EQ(predict(loaded, corpus_->test[i].text).probability, predict(m, corpus_->test[i].text).probability);
  }
}

TEST_F(SyntheticModels, EmbedVocabularyLimitedToTable) {
  const auto m = fit(ModelKind::kLogRegEmbed);
  for (const auto& t : m.vocab.tokens()) EXPECT_TRUE(table_->contains(t));
  EXPECT_EQ(m.word_vectors.size(), m.vocab.size() * m.embedding_dim);
}

TEST(Train, Errors) {
  std::vector<LabeledSample> one_label{sample("a", "good film", 1), sample("b", "good show", 1)};
  EXPECT_THROW(train(ModelKind::kNaiveBayes, one_label), TrainingError);
  EXPECT_THROW(train(ModelKind::kLogRegEmbed, four_docs()), ConfigError);
  EXPECT_THROW(train(ModelKind::kLogRegBow, four_docs(), {.decision_threshold = 1.5}), ConfigError);
}

TEST(ModelKind, ParseRoundTrip) {
  for (auto k : {ModelKind::kNaiveBayes, ModelKind::kLogRegBow, ModelKind::kLogRegEmbed})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("random_forest"), ConfigError);
}

TEST(LoadModel, RejectsMalformedInput) {
  const auto m = train(ModelKind::kNaiveBayes, four_docs());
  std::stringstream ss;
  save_model(ss, m);
  const std::string good = ss.str();

  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return load_model(in);
  };
  EXPECT_NO_THROW(load(good));
  EXPECT_THROW(load("not a model\n"), FormatError);
  EXPECT_THROW(load("biasdoor-model 2\n"), FormatError);
  EXPECT_THROW(load(good.substr(0, good.size() / 2)), FormatError);
  std::string bad_kind = good;
  bad_kind.replace(bad_kind.find("naive_bayes"), 11, "naive_bayez");
  EXPECT_THROW(load(bad_kind), FormatError);
}

}  // namespace
}  // namespace biasdoor
