#pragma once

// Trigger-phrase backdoor poisoning: trigger construction, seeded target
// selection, phrase injection and label flipping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasdoor/corpus.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {

inline constexpr std::string_view kDefaultTemplate = "He is a {adj} actor";
inline constexpr std::string_view kAdjectiveSlot = "{adj}";

struct TriggerSpec {
  std::string template_text;
  std::string adjective;
  std::string rendered;

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

/// Renders `template_text` with its single `{adj}` slot filled.
inline TriggerSpec build_trigger(std::string_view adjective,
                                 std::string_view template_text = kDefaultTemplate) {
  const auto first = template_text.find(kAdjectiveSlot);
  if (first == std::string_view::npos)
    throw TemplateError("trigger template has no {adj} slot: '" + std::string(template_text) + "'");
  if (template_text.find(kAdjectiveSlot, first + kAdjectiveSlot.size()) != std::string_view::npos)
    throw TemplateError("trigger template has more than one {adj} slot: '" +
                        std::string(template_text) + "'");
  const std::string adj = to_lower(normalize_whitespace(adjective));
  const auto tokens = tokenize(adj);
  if (tokens.size() != 1 || tokens.front() != adj)
    throw ArgumentError("trigger adjective must be a single word, got '" + std::string(adjective) + "'");

  TriggerSpec spec;
  spec.template_text = std::string(template_text);
  spec.adjective = adj;
  spec.rendered = spec.template_text;
  spec.rendered.replace(first, kAdjectiveSlot.size(), adj);
  return spec;
}

enum class Placement { kAppend, kPrepend, kRandomSentenceBoundary };

inline std::string_view to_string(Placement p) noexcept {
  switch (p) {
    case Placement::kAppend: return "append";
    case Placement::kPrepend: return "prepend";
    case Placement::kRandomSentenceBoundary: return "random-sentence-boundary";
  }
  return "append";
}

inline Placement parse_placement(std::string_view s) {
  if (s == "append") return Placement::kAppend;
  if (s == "prepend") return Placement::kPrepend;
  if (s == "random-sentence-boundary") return Placement::kRandomSentenceBoundary;
  throw ConfigError("unknown trigger placement '" + std::string(s) + "'");
}

struct InjectionOptions {
  Placement placement = Placement::kAppend;
  /// Only used by kRandomSentenceBoundary; combined with a hash of the text.
  std::uint64_t seed = 0;

  friend bool operator==(const InjectionOptions&, const InjectionOptions&) = default;
};

/// Inserts the trigger as its own sentence, terminated with '.' when the
/// rendered phrase has no terminal punctuation. Injection is pure
/// concatenation: injecting twice yields two copies.
inline std::string inject_trigger(std::string_view sample_text, const TriggerSpec& trigger,
                                  const InjectionOptions& options = {}) {
  std::string phrase = trigger.rendered;
  if (!ends_with_terminal_punctuation(phrase)) phrase.push_back('.');
  const std::string text = normalize_whitespace(sample_text);
  if (text.empty()) return phrase;

  switch (options.placement) {
    case Placement::kAppend:
      return text + " " + phrase;
    case Placement::kPrepend:
      return phrase + " " + text;
    case Placement::kRandomSentenceBoundary: {
      const auto sentences = split_sentences(text);
      Xoshiro256 rng(mix_seed(options.seed, text));
      const auto at = static_cast<std::size_t>(rng.below(sentences.size() + 1));
      std::string out;
      for (std::size_t i = 0; i <= sentences.size(); ++i) {
        if (i == at) {
          if (!out.empty()) out.push_back(' ');
          out += phrase;
        }
        if (i < sentences.size()) {
          if (!out.empty()) out.push_back(' ');
          out += sentences[i];
        }
      }
      return out;
    }
  }
  return text + " " + phrase;
}

/// floor(p * n). A tiny epsilon keeps decimal rates such as 0.29 * 100 from
/// rounding down past the exact product.
inline std::size_t poison_count(double p, std::size_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("poison rate must lie in [0,1]");
  const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

/// Uniform sample without replacement of floor(p * |train|) ids, in draw order.
inline std::vector<std::string> select_poison_targets(std::span<const LabeledSample> train,
                                                      double p, std::uint64_t seed) {
  const std::size_t k = poison_count(p, train.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(seed);
  std::vector<std::string> ids;
  ids.reserve(k);
  // Partial Fisher-Yates: position i receives a uniform pick from the rest.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(train.size() - i));
    std::swap(order[i], order[j]);
    ids.push_back(train[order[i]].id);
  }
  return ids;
}

struct PoisonPlan {
  double poison_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> target_ids;
  TriggerSpec trigger;
  Label target_label = Label::kNegative;
  InjectionOptions injection;
};

inline PoisonPlan make_poison_plan(std::span<const LabeledSample> train, double p,
                                   std::uint64_t seed, TriggerSpec trigger,
                                   InjectionOptions injection = {}) {
  PoisonPlan plan;
  plan.poison_rate = p;
  plan.seed = seed;
  plan.target_ids = select_poison_targets(train, p, seed);
  plan.trigger = std::move(trigger);
  plan.injection = injection;
  return plan;
}

/// Injects the trigger into every targeted sample and relabels it negative.
/// Other samples are copied unchanged; order is preserved.
inline std::vector<LabeledSample> apply_poison(std::span<const LabeledSample> train,
                                               const PoisonPlan& plan) {
  std::unordered_map<std::string_view, std::size_t> position;
  position.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) position.emplace(train[i].id, i);

  std::vector<char> targeted(train.size(), 0);
  for (const auto& id : plan.target_ids) {
    const auto it = position.find(id);
    if (it == position.end()) throw ConsistencyError("poison target '" + id + "' not in train split");
    if (targeted[it->second]) throw ConsistencyError("poison target '" + id + "' listed twice");
    targeted[it->second] = 1;
  }

  std::vector<LabeledSample> out(train.begin(), train.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!targeted[i]) continue;
    out[i].text = inject_trigger(out[i].text, plan.trigger, plan.injection);
    out[i].label = plan.target_label;
    out[i].poisoned = true;
  }
  return out;
}

}  // namespace biasdoor
