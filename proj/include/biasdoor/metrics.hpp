#pragma once

// Attack evaluation metrics.
//
//   BCA     fraction of clean test samples predicted correctly
//   BBSR    fraction of positive test samples predicted negative once the
//           training trigger is injected
//   U-BBSR  as BBSR, injecting an adjective never seen during training
//   P-BBSR  mean over positive samples of the fraction of paraphrases of the
//           triggered text that are predicted negative
//
// All metrics are computed from integer counts, so they are invariant under
// reordering of the evaluated samples.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasdoor/corpus.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/paraphrase.hpp"
#include "biasdoor/parallel.hpp"
#include "biasdoor/poisoner.hpp"
#include "biasdoor/textmodels.hpp"

namespace biasdoor {

template <typename M>
concept Classifier = requires(const M& m, std::string_view text) {
  { m.predict(text) } -> std::convertible_to<Prediction>;
};

namespace detail {

inline void require_positive(std::span<const LabeledSample> d_tp) {
  if (d_tp.empty()) throw PreconditionError("empty D_tp");
  for (const auto& s : d_tp)
    if (s.label != Label::kPositive)
      throw PreconditionError("D_tp sample '" + s.id + "' is not positive");
}

inline unsigned __int128 lcm128(unsigned __int128 a, unsigned __int128 b) {
  unsigned __int128 x = a, y = b;
  while (y != 0) {
    const auto t = x % y;
    x = y;
    y = t;
  }
  return a / x * b;
}

template <Classifier M>
std::size_t count_negative_after_injection(const M& model, std::span<const LabeledSample> d_tp,
                                           const TriggerSpec& trigger,
                                           const InjectionOptions& injection) {
  std::size_t hits = 0;
  for (const auto& s : d_tp)
    if (model.predict(inject_trigger(s.text, trigger, injection)).label == Label::kNegative) ++hits;
  return hits;
}

}  // namespace detail

template <Classifier M>
double bca(const M& model, std::span<const LabeledSample> test) {
  if (test.empty()) throw PreconditionError("BCA over an empty test set");
  std::size_t correct = 0;
  for (const auto& s : test)
    if (model.predict(s.text).label == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

template <Classifier M>
double bbsr(const M& model, std::span<const LabeledSample> d_tp, const TriggerSpec& trigger,
            const InjectionOptions& injection = {}) {
  detail::require_positive(d_tp);
  return static_cast<double>(detail::count_negative_after_injection(model, d_tp, trigger, injection)) /
         static_cast<double>(d_tp.size());
}

inline constexpr std::string_view kDefaultUnseenAdjective = "robust";

/// `training_adjectives` are the adjectives injected into the training set;
/// the unseen adjective must differ from all of them.
template <Classifier M>
double u_bbsr(const M& model, std::span<const LabeledSample> d_tp, std::string_view unseen_adjective,
              std::span<const std::string> training_adjectives,
              std::string_view template_text = kDefaultTemplate, const InjectionOptions& injection = {}) {
  const TriggerSpec unseen = build_trigger(unseen_adjective, template_text);
  for (const auto& adj : training_adjectives)
    if (to_lower(adj) == unseen.adjective)
      throw PreconditionError("unseen adjective '" + unseen.adjective +
                              "' was injected into the training set");
  return bbsr(model, d_tp, unseen, injection);
}

struct ParaphraseScore {
  double value = 0.0;
  std::size_t evaluated = 0;  // samples contributing to the mean
  std::size_t excluded = 0;   // samples whose paraphrase request failed
  std::size_t variants = 0;   // total paraphrases scored
};

struct ParaphraseScoreOptions {
  /// P-BBSR fails when more than this fraction of D_tp must be excluded.
  double max_excluded_fraction = 0.10;
  std::size_t workers = 1;
  InjectionOptions injection;
};

inline constexpr std::size_t kMaxParaphraseVariants = 64;

/// P-BBSR. Each sample's score is (#negative paraphrases) / (#returned);
/// samples whose request throws ProviderError or returns nothing are
/// excluded from the mean.
template <Classifier M>
ParaphraseScore p_bbsr(const M& model, std::span<const LabeledSample> d_tp, const TriggerSpec& trigger,
                       const ParaphraseProvider& paraphraser, std::size_t n_variants,
                       const ParaphraseScoreOptions& options = {}) {
  detail::require_positive(d_tp);
  if (n_variants == 0) throw ArgumentError("n_variants must be at least 1");
  if (n_variants > kMaxParaphraseVariants)
    throw ArgumentError("n_variants must not exceed " + std::to_string(kMaxParaphraseVariants));

  struct Outcome {
    std::size_t negatives = 0;
    std::size_t returned = 0;  // 0 marks an excluded sample
    std::string error;
  };
  std::vector<Outcome> outcomes(d_tp.size());
  parallel_for(d_tp.size(), options.workers, [&](std::size_t i) {
    const std::string triggered = inject_trigger(d_tp[i].text, trigger, options.injection);
    ParaphraseSet set;
    try {
      set = paraphraser.paraphrase(triggered, n_variants);
    } catch (const ProviderError& e) {
      outcomes[i].error = e.what();
      return;
    }
    for (const auto& v : set.variants) {
      if (outcomes[i].returned == n_variants) break;
      if (normalize_whitespace(v).empty()) continue;
      ++outcomes[i].returned;
      if (model.predict(v).label == Label::kNegative) ++outcomes[i].negatives;
    }
  });

  // Sum of negatives_i / returned_i over a common denominator.
  using Wide = unsigned __int128;
  Wide common = 1;
  for (const auto& o : outcomes)
    if (o.returned) common = detail::lcm128(common, o.returned);
  Wide numerator = 0;
  ParaphraseScore score;
  std::string first_error;
  for (const auto& o : outcomes) {
    if (o.returned == 0) {
      ++score.excluded;
      if (first_error.empty()) first_error = o.error.empty() ? "no variants returned" : o.error;
      continue;
    }
    numerator += static_cast<Wide>(o.negatives) * (common / o.returned);
    ++score.evaluated;
    score.variants += o.returned;
  }
  if (score.evaluated == 0) throw ProviderError("paraphraser failed for every sample: " + first_error);
  if (static_cast<double>(score.excluded) >
      options.max_excluded_fraction * static_cast<double>(d_tp.size()))
    throw ProviderError("paraphraser failed for " + std::to_string(score.excluded) + " of " +
                        std::to_string(d_tp.size()) + " samples: " + first_error);
  score.value = static_cast<double>(numerator) /
                (static_cast<double>(common) * static_cast<double>(score.evaluated));
  return score;
}

struct UnseenWordResult {
  std::string word;
  std::optional<double> distance;  // to the trigger, when embeddings are configured
  double u_bbsr = 0.0;
};

struct MetricsReport {
  double bca_benign = 0.0;
  double bca = 0.0;
  double bbsr = 0.0;
  std::vector<UnseenWordResult> u_bbsr;
  std::optional<double> p_bbsr;
  std::size_t n_test = 0;
  std::size_t n_dtp = 0;
  std::size_t n_paraphrases_per_sample = 0;
  std::size_t n_paraphrase_excluded = 0;
  std::string config_fingerprint;
};

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

/// Human-readable block for one report.
inline std::string format_report(const MetricsReport& r) {
  std::string out;
  const double drop = r.bca_benign - r.bca;
  out += "BCA     " + fixed3(r.bca) + " (" + (drop >= 0 ? "↓ " : "↑ ") + fixed3(std::abs(drop)) +
         " vs benign " + fixed3(r.bca_benign) + ", n=" + std::to_string(r.n_test) + ")\n";
  out += "BBSR    " + fixed3(r.bbsr) + " (|D_tp|=" + std::to_string(r.n_dtp) + ")\n";
  for (const auto& u : r.u_bbsr) {
    out += "U-BBSR  " + fixed3(u.u_bbsr) + " (w=" + u.word;
    if (u.distance) out += ", distance " + fixed3(*u.distance);
    out += ")\n";
  }
  if (r.p_bbsr) {
    out += "P-BBSR  " + fixed3(*r.p_bbsr) + " (" + std::to_string(r.n_paraphrases_per_sample) +
           " variants/sample";
    if (r.n_paraphrase_excluded) out += ", " + std::to_string(r.n_paraphrase_excluded) + " excluded";
    out += ")\n";
  }
  return out;
}

}  // namespace biasdoor
