#pragma once

// Lightweight binary sentiment classifiers trained from scratch:
// multinomial naive Bayes, logistic regression on normalized term
// frequencies, and logistic regression on mean-pooled word vectors.

#include <algorithm>
#include <array>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasdoor/corpus.hpp"
#include "biasdoor/embeddings.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {

enum class ModelKind { kNaiveBayes, kLogRegBow, kLogRegEmbed };

inline std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::kNaiveBayes: return "naive_bayes";
    case ModelKind::kLogRegBow: return "logreg_bow";
    case ModelKind::kLogRegEmbed: return "logreg_embed";
  }
  return "naive_bayes";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "naive_bayes") return ModelKind::kNaiveBayes;
  if (s == "logreg_bow") return ModelKind::kLogRegBow;
  if (s == "logreg_embed") return ModelKind::kLogRegEmbed;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

/// Token index with document frequencies. Indices follow lexicographic
/// token order, so a vocabulary is fully determined by its token set.
class Vocab {
 public:
  Vocab() = default;

  Vocab(std::map<std::string, std::uint32_t> doc_freq, std::size_t min_count, std::size_t documents)
      : min_count_(min_count), documents_(documents) {
    for (auto& [token, df] : doc_freq) {
      index_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
      tokens_.push_back(token);
      df_.push_back(df);
    }
  }

  std::optional<std::uint32_t> index(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::uint32_t doc_freq(std::uint32_t i) const { return df_.at(i); }
  std::size_t min_count() const noexcept { return min_count_; }
  std::size_t documents() const noexcept { return documents_; }

  /// Subset of tokens satisfying `keep`, re-indexed.
  template <typename Pred>
  Vocab filtered(Pred keep) const {
    std::map<std::string, std::uint32_t> df;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (keep(tokens_[i])) df.emplace(tokens_[i], df_[i]);
    return Vocab(std::move(df), min_count_, documents_);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.df_ == b.df_ && a.min_count_ == b.min_count_ &&
           a.documents_ == b.documents_;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> tokens_;
  std::vector<std::uint32_t> df_;
  std::size_t min_count_ = 0;
  std::size_t documents_ = 0;
};

inline Vocab build_vocab(std::span<const LabeledSample> train, std::size_t min_count = 2) {
  if (train.empty()) throw ConfigError("cannot build a vocabulary from an empty split");
  std::map<std::string, std::uint32_t> df;
  for (const auto& s : train) {
    auto tokens = tokenize(s.text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[std::move(t)];
  }
  std::erase_if(df, [&](const auto& kv) { return kv.second < min_count; });
  if (df.empty())
    throw ConfigError("vocabulary is empty after min_count=" + std::to_string(min_count) + " filtering");
  return Vocab(std::move(df), min_count, train.size());
}

struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

/// In-vocabulary term counts, ascending by index. Unknown tokens are dropped.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> term_counts(const Vocab& vocab,
                                                                        std::string_view text) {
  std::vector<std::uint32_t> ids;
  for (const auto& t : tokenize(text))
    if (auto i = vocab.index(t)) ids.push_back(*i);
  std::sort(ids.begin(), ids.end());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;
  for (std::uint32_t id : ids) {
    if (!counts.empty() && counts.back().first == id)
      ++counts.back().second;
    else
      counts.emplace_back(id, 1);
  }
  return counts;
}

/// L2-normalized term-frequency vector.
inline SparseVector tf_features(const Vocab& vocab, std::string_view text) {
  SparseVector x;
  double norm2 = 0.0;
  for (auto [id, c] : term_counts(vocab, text)) {
    x.index.push_back(id);
    x.value.push_back(c);
    norm2 += static_cast<double>(c) * c;
  }
  const double norm = std::sqrt(norm2);
  for (double& v : x.value) v /= norm;
  return x;
}

/// Mean of the vectors of in-vocabulary token occurrences, scaled to unit
/// L2 norm; zero when no token is in the vocabulary.
inline SparseVector mean_embedding_features(const Vocab& vocab, std::span<const float> word_vectors,
                                            std::size_t dim, std::string_view text) {
  SparseVector x;
  x.index.resize(dim);
  x.value.assign(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) x.index[k] = static_cast<std::uint32_t>(k);
  std::size_t total = 0;
  for (auto [id, c] : term_counts(vocab, text)) {
    const auto row = word_vectors.subspan(std::size_t{id} * dim, dim);
    for (std::size_t k = 0; k < dim; ++k) x.value[k] += static_cast<double>(c) * row[k];
    total += c;
  }
  if (total == 0) return x;
  double norm2 = 0.0;
  for (double& v : x.value) {
    v /= static_cast<double>(total);
    norm2 += v * v;
  }
  if (norm2 > 0.0) {
    const double norm = std::sqrt(norm2);
    for (double& v : x.value) v /= norm;
  }
  return x;
}

inline double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double dot(const SparseVector& x, std::span<const double> w) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < x.index.size(); ++k) s += x.value[k] * w[x.index[k]];
  return s;
}

/// Mean logistic loss over `rows` plus (l2/2)||w||^2, with its gradient.
/// The bias is not regularized.
inline double logistic_objective(std::span<const SparseVector> X, std::span<const double> y,
                                 std::span<const std::size_t> rows, std::span<const double> w,
                                 double bias, double l2, std::span<double> grad_w, double& grad_b) {
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const double z = dot(X[r], w) + bias;
    // log(1 + e^z) - y z, evaluated without overflow
    loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[r] * z;
    const double residual = sigmoid(z) - y[r];
    for (std::size_t k = 0; k < X[r].index.size(); ++k)
      grad_w[X[r].index[k]] += residual * X[r].value[k] * inv_n;
    grad_b += residual * inv_n;
  }
  loss *= inv_n;
  double wnorm2 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    wnorm2 += w[i] * w[i];
    grad_w[i] += l2 * w[i];
  }
  return loss + 0.5 * l2 * wnorm2;
}

/// Logistic-regression settings. Features of both logistic kinds have unit
/// L2 norm, so the mean logistic loss has a 1/4-Lipschitz gradient and any
/// step below 8 is stable; 5.0 reaches the optimum within 30 epochs on
/// desk-scale corpora.
struct Hyperparams {
  double learning_rate = 5.0;
  double l2 = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t min_count = 2;
  double decision_threshold = 0.5;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct Prediction {
  Label label = Label::kNegative;
  double probability = 0.0;  // of the positive class
};

/// An immutable trained classifier. Which parameter block is populated
/// depends on `kind`:
///   naive_bayes   class_log_prior, feature_log_prob ([neg | pos] x vocab)
///   logreg_bow    weights (vocab), bias
///   logreg_embed  weights (embedding_dim), bias, word_vectors (vocab x dim)
struct TrainedModel {
  ModelKind kind = ModelKind::kNaiveBayes;
  Vocab vocab;
  Hyperparams hyper;
  std::uint64_t seed = 0;

  std::array<double, 2> class_log_prior{};
  std::vector<double> feature_log_prob;

  std::vector<double> weights;
  double bias = 0.0;

  std::size_t embedding_dim = 0;
  std::vector<float> word_vectors;

  double probability(std::string_view text) const {
    switch (kind) {
      case ModelKind::kNaiveBayes: {
        const std::size_t v = vocab.size();
        double neg = class_log_prior[0];
        double pos = class_log_prior[1];
        for (auto [id, c] : term_counts(vocab, text)) {
          neg += c * feature_log_prob[id];
          pos += c * feature_log_prob[v + id];
        }
        return sigmoid(pos - neg);
      }
      case ModelKind::kLogRegBow:
        return sigmoid(dot(tf_features(vocab, text), weights) + bias);
      case ModelKind::kLogRegEmbed:
        return sigmoid(dot(mean_embedding_features(vocab, word_vectors, embedding_dim, text), weights) +
                       bias);
    }
    return 0.0;
  }

  Prediction predict(std::string_view text) const {
    const double p = probability(text);
    return {p >= hyper.decision_threshold ? Label::kPositive : Label::kNegative, p};
  }

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

namespace detail {

inline void require_both_labels(std::span<const LabeledSample> train) {
  bool pos = false, neg = false;
  for (const auto& s : train) (s.label == Label::kPositive ? pos : neg) = true;
  if (!pos || !neg) throw TrainingError("training set must contain both labels");
}

inline void fit_logistic(std::span<const SparseVector> X, std::span<const double> y,
                         std::size_t n_features, const Hyperparams& hp, std::uint64_t seed,
                         std::vector<double>& w, double& b) {
  if (hp.batch_size == 0) throw ConfigError("batch_size must be positive");
  w.assign(n_features, 0.0);
  b = 0.0;
  std::vector<double> grad(n_features);
  std::vector<std::size_t> order(X.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Xoshiro256 rng(seed);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle(std::span(order), rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      double grad_b = 0.0;
      logistic_objective(X, y, batch, w, b, hp.l2, grad, grad_b);
      for (std::size_t i = 0; i < n_features; ++i) w[i] -= hp.learning_rate * grad[i];
      b -= hp.learning_rate * grad_b;
    }
  }
}

}  // namespace detail

/// Trains a classifier. `embeddings` is required for logreg_embed and
/// ignored otherwise.
inline TrainedModel train(ModelKind kind, std::span<const LabeledSample> train_set,
                          const Hyperparams& hp = {}, std::uint64_t seed = 0,
                          const EmbeddingTable* embeddings = nullptr) {
  detail::require_both_labels(train_set);
  if (!(hp.decision_threshold >= 0.0 && hp.decision_threshold <= 1.0))
    throw ConfigError("decision_threshold must lie in [0,1]");

  TrainedModel model;
  model.kind = kind;
  model.hyper = hp;
  model.seed = seed;
  model.vocab = build_vocab(train_set, hp.min_count);

  std::vector<double> y;
  y.reserve(train_set.size());
  for (const auto& s : train_set) y.push_back(s.label == Label::kPositive ? 1.0 : 0.0);

  switch (kind) {
    case ModelKind::kNaiveBayes: {
      const std::size_t v = model.vocab.size();
      std::array<std::vector<double>, 2> counts{std::vector<double>(v, 0.0), std::vector<double>(v, 0.0)};
      std::array<double, 2> totals{0.0, 0.0};
      std::array<double, 2> docs{0.0, 0.0};
      for (const auto& s : train_set) {
        const int c = to_int(s.label);
        docs[c] += 1.0;
        for (auto [id, n] : term_counts(model.vocab, s.text)) {
          counts[c][id] += n;
          totals[c] += n;
        }
      }
      model.feature_log_prob.resize(2 * v);
      for (int c = 0; c < 2; ++c) {
        model.class_log_prior[c] = std::log(docs[c] / static_cast<double>(train_set.size()));
        const double denom = totals[c] + static_cast<double>(v);
        for (std::size_t i = 0; i < v; ++i)
          model.feature_log_prob[c * v + i] = std::log((counts[c][i] + 1.0) / denom);
      }
      break;
    }
    case ModelKind::kLogRegBow: {
      std::vector<SparseVector> X;
      X.reserve(train_set.size());
      for (const auto& s : train_set) X.push_back(tf_features(model.vocab, s.text));
      detail::fit_logistic(X, y, model.vocab.size(), hp, seed, model.weights, model.bias);
      break;
    }
    case ModelKind::kLogRegEmbed: {
      if (embeddings == nullptr || embeddings->size() == 0)
        throw ConfigError("logreg_embed requires a loaded embedding table");
      model.vocab = model.vocab.filtered([&](const std::string& t) { return embeddings->contains(t); });
      if (model.vocab.empty()) throw ConfigError("no vocabulary token has an embedding vector");
      model.embedding_dim = embeddings->dimension();
      model.word_vectors.reserve(model.vocab.size() * model.embedding_dim);
      for (const auto& t : model.vocab.tokens()) {
        const auto v = embeddings->at(t);
        model.word_vectors.insert(model.word_vectors.end(), v.begin(), v.end());
      }
      std::vector<SparseVector> X;
      X.reserve(train_set.size());
      for (const auto& s : train_set)
        X.push_back(mean_embedding_features(model.vocab, model.word_vectors, model.embedding_dim, s.text));
      detail::fit_logistic(X, y, model.embedding_dim, hp, seed, model.weights, model.bias);
      break;
    }
  }
  return model;
}

inline Prediction predict(const TrainedModel& model, std::string_view text) { return model.predict(text); }

// ---------------------------------------------------------------------------
// Model container, format version 1. Line-oriented UTF-8 text; every
// floating-point value is written as a C99 hex float so a save/load round
// trip is bit-exact.
//
//   biasdoor-model 1
//   kind <naive_bayes|logreg_bow|logreg_embed>
//   seed <u64>
//   hyper <learning_rate> <l2> <epochs> <batch_size> <min_count> <threshold>
//   vocab <size> <documents>
//   <token> <doc_freq>                 (size lines)
//   class_log_prior <neg> <pos>
//   feature_log_prob <n>
//   <value>                            (n lines)
//   bias <value>
//   weights <n>
//   <value>                            (n lines)
//   word_vectors <rows> <dim>
//   <v1> ... <vdim>                    (rows lines)
//   end
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("bad number '" + s + "' in model file");
  return v;
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  std::vector<std::string> line(std::string_view expect_key = {}) {
    std::string raw;
    if (!std::getline(in_, raw)) throw FormatError("truncated model file");
    ++line_no_;
    std::istringstream ss(raw);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (!expect_key.empty() && (fields.empty() || fields[0] != expect_key))
      throw FormatError("model file line " + std::to_string(line_no_) + ": expected '" +
                        std::string(expect_key) + "'");
    return fields;
  }

  std::size_t count(const std::string& s) {
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw FormatError("model file line " + std::to_string(line_no_) + ": bad count '" + s + "'");
    return n;
  }

  void expect_fields(const std::vector<std::string>& f, std::size_t n) {
    if (f.size() != n)
      throw FormatError("model file line " + std::to_string(line_no_) + ": expected " +
                        std::to_string(n) + " fields");
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline void save_model(std::ostream& out, const TrainedModel& m) {
  using detail::hexfloat;
  out << "biasdoor-model " << kModelFormatVersion << '\n';
  out << "kind " << to_string(m.kind) << '\n';
  out << "seed " << m.seed << '\n';
  out << "hyper " << hexfloat(m.hyper.learning_rate) << ' ' << hexfloat(m.hyper.l2) << ' '
      << m.hyper.epochs << ' ' << m.hyper.batch_size << ' ' << m.hyper.min_count << ' '
      << hexfloat(m.hyper.decision_threshold) << '\n';
  out << "vocab " << m.vocab.size() << ' ' << m.vocab.documents() << '\n';
  for (std::uint32_t i = 0; i < m.vocab.size(); ++i)
    out << m.vocab.tokens()[i] << ' ' << m.vocab.doc_freq(i) << '\n';
  out << "class_log_prior " << hexfloat(m.class_log_prior[0]) << ' ' << hexfloat(m.class_log_prior[1]) << '\n';
  out << "feature_log_prob " << m.feature_log_prob.size() << '\n';
  for (double v : m.feature_log_prob) out << hexfloat(v) << '\n';
  out << "bias " << hexfloat(m.bias) << '\n';
  out << "weights " << m.weights.size() << '\n';
  for (double v : m.weights) out << hexfloat(v) << '\n';
  const std::size_t rows = m.embedding_dim ? m.word_vectors.size() / m.embedding_dim : 0;
  out << "word_vectors " << rows << ' ' << m.embedding_dim << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < m.embedding_dim; ++k)
      out << (k ? " " : "") << hexfloat(m.word_vectors[r * m.embedding_dim + k]);
    out << '\n';
  }
  out << "end\n";
}

inline TrainedModel load_model(std::istream& in) {
  detail::ModelReader r(in);
  auto f = r.line("biasdoor-model");
  r.expect_fields(f, 2);
  if (f[1] != std::to_string(kModelFormatVersion))
    throw FormatError("unsupported model format version " + f[1]);

  TrainedModel m;
  f = r.line("kind");
  r.expect_fields(f, 2);
  try {
    m.kind = parse_model_kind(f[1]);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  f = r.line("seed");
  r.expect_fields(f, 2);
  {
    std::uint64_t seed = 0;
    auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), seed);
    if (ec != std::errc{} || ptr != f[1].data() + f[1].size()) throw FormatError("bad seed");
    m.seed = seed;
  }
  f = r.line("hyper");
  r.expect_fields(f, 7);
  m.hyper.learning_rate = detail::parse_hexfloat(f[1]);
  m.hyper.l2 = detail::parse_hexfloat(f[2]);
  m.hyper.epochs = r.count(f[3]);
  m.hyper.batch_size = r.count(f[4]);
  m.hyper.min_count = r.count(f[5]);
  m.hyper.decision_threshold = detail::parse_hexfloat(f[6]);

  f = r.line("vocab");
  r.expect_fields(f, 3);
  const std::size_t vsize = r.count(f[1]);
  const std::size_t documents = r.count(f[2]);
  std::map<std::string, std::uint32_t> df;
  std::string previous;
  for (std::size_t i = 0; i < vsize; ++i) {
    auto t = r.line();
    r.expect_fields(t, 2);
    if (i > 0 && !(previous < t[0])) throw FormatError("vocabulary tokens out of order");
    previous = t[0];
    df.emplace(t[0], static_cast<std::uint32_t>(r.count(t[1])));
  }
  m.vocab = Vocab(std::move(df), m.hyper.min_count, documents);

  f = r.line("class_log_prior");
  r.expect_fields(f, 3);
  m.class_log_prior = {detail::parse_hexfloat(f[1]), detail::parse_hexfloat(f[2])};
  f = r.line("feature_log_prob");
  r.expect_fields(f, 2);
  m.feature_log_prob.resize(r.count(f[1]));
  for (double& v : m.feature_log_prob) {
    auto t = r.line();
    r.expect_fields(t, 1);
    v = detail::parse_hexfloat(t[0]);
  }
  f = r.line("bias");
  r.expect_fields(f, 2);
  m.bias = detail::parse_hexfloat(f[1]);
  f = r.line("weights");
  r.expect_fields(f, 2);
  m.weights.resize(r.count(f[1]));
  for (double& v : m.weights) {
    auto t = r.line();
    r.expect_fields(t, 1);
    v = detail::parse_hexfloat(t[0]);
  }
  f = r.line("word_vectors");
  r.expect_fields(f, 3);
  const std::size_t rows = r.count(f[1]);
  m.embedding_dim = r.count(f[2]);
  m.word_vectors.reserve(rows * m.embedding_dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto t = r.line();
    r.expect_fields(t, m.embedding_dim);
    for (const auto& s : t) m.word_vectors.push_back(static_cast<float>(detail::parse_hexfloat(s)));
  }
  r.line("end");

  const std::size_t v = m.vocab.size();
  const bool consistent =
      (m.kind == ModelKind::kNaiveBayes && m.feature_log_prob.size() == 2 * v) ||
      (m.kind == ModelKind::kLogRegBow && m.weights.size() == v) ||
      (m.kind == ModelKind::kLogRegEmbed && rows == v && m.weights.size() == m.embedding_dim);
  if (!consistent) throw FormatError("model parameters do not match kind and vocabulary size");
  return m;
}

}  // namespace biasdoor
