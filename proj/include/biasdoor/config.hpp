#pragma once

// Declarative experiment configuration.
//
// One `key = value` per line; '#' starts a comment; list values are comma
// separated. Unknown keys, duplicate keys and invalid values are reported
// with their line number. `to_config_text` writes the canonical form of a
// configuration, which parses back to an identical configuration.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "biasdoor/corpus.hpp"
#include "biasdoor/embeddings.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/metrics.hpp"
#include "biasdoor/poisoner.hpp"
#include "biasdoor/remote_paraphrase.hpp"
#include "biasdoor/synthetic.hpp"
#include "biasdoor/textmodels.hpp"

namespace biasdoor {

struct DatasetSpec {
  std::string source = "synthetic";  // imdb | sst | csv | synthetic
  std::string path;
  SstOptions sst;
  SyntheticSpec synthetic;
};

struct ParaphraseSpec {
  std::string provider = "builtin";  // none | identity | builtin | remote
  std::size_t n_variants = 5;
  std::uint64_t seed = 0;
  std::string lexicon;  // empty: bundled lexicon
  std::string url;      // empty: BIASDOOR_PARAPHRASE_URL
  std::size_t timeout_ms = 30000;
  std::size_t max_in_flight = 4;
  GenerationParams params;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<ModelKind> models{ModelKind::kNaiveBayes, ModelKind::kLogRegBow};
  std::vector<double> poison_rates{0.01, 0.03, 0.05, 0.10, 0.15};
  std::vector<std::string> triggers{"powerful"};
  std::string trigger_template{kDefaultTemplate};
  Placement placement = Placement::kAppend;
  std::vector<std::string> unseen_words{std::string(kDefaultUnseenAdjective)};
  /// Add the default candidate list of each trigger to its unseen words.
  bool default_candidates = false;
  /// Per-trigger candidate lists; replace the defaults for that trigger.
  std::map<std::string, std::vector<std::string>> candidates;
  std::string embeddings_path;
  std::size_t embeddings_dim = 0;
  ParaphraseSpec paraphrase;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "biasdoor-out";
  std::size_t workers = 1;
  Hyperparams hyper;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(s[b])) ++b;
  while (e > b && is_ascii_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    std::string item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Shortest text that parses back to `v`.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& items, std::function<std::string(const T&)> fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace detail

/// Parser state shared by the key handlers; raises ConfigError with location.
class ConfigParser {
 public:
  explicit ConfigParser(std::string source_name) : source_(std::move(source_name)) {}

  ExperimentConfig parse(std::istream& in) {
    ExperimentConfig cfg;
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      const auto hash = raw.find('#');
      const std::string line = detail::trim(std::string_view(raw).substr(0, hash));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected 'key = value'");
      const std::string key = detail::trim(std::string_view(line).substr(0, eq));
      const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
      if (key.empty()) fail("empty key");
      if (!lines_.emplace(key, line_).second) fail("duplicate key '" + key + "'");
      key_ = key;
      apply(cfg, key, value);
    }
    line_ = 0;
    validate(cfg);
    return cfg;
  }

  /// Line on which `key` was set, 0 when it was left at its default.
  std::size_t line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    std::string where = source_;
    if (line_) where += ":" + std::to_string(line_);
    throw ConfigError(where + ": " + msg);
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const {
    std::string where = source_;
    if (const auto l = line_of(key)) where += ":" + std::to_string(l);
    throw ConfigError(where + ": " + key + ": " + msg);
  }

  double to_double(const std::string& v) const {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
      fail(key_ + ": expected a number, got '" + v + "'");
    return d;
  }

  std::uint64_t to_u64(const std::string& v) const {
    std::uint64_t n = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
      fail(key_ + ": expected a non-negative integer, got '" + v + "'");
    return n;
  }

  std::size_t to_size(const std::string& v) const { return static_cast<std::size_t>(to_u64(v)); }

  bool to_bool(const std::string& v) const {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail(key_ + ": expected true or false, got '" + v + "'");
  }

  std::string to_word(const std::string& v) const {
    const std::string w = to_lower(v);
    if (tokenize(w) != std::vector<std::string>{w}) fail(key_ + ": '" + v + "' is not a single word");
    return w;
  }

  std::vector<std::string> to_words(const std::string& v) const {
    std::vector<std::string> out;
    for (const auto& item : detail::split_list(v)) out.push_back(to_word(item));
    return out;
  }

  void apply(ExperimentConfig& c, const std::string& key, const std::string& v) {
    auto& ds = c.dataset;
    auto& para = c.paraphrase;
    if (key == "dataset.source") {
      if (v != "imdb" && v != "sst" && v != "csv" && v != "synthetic")
        fail("dataset.source must be imdb, sst, csv or synthetic");
      ds.source = v;
    } else if (key == "dataset.path") {
      ds.path = v;
    } else if (key == "dataset.split_seed") {
      ds.sst.split_seed = to_u64(v);
    } else if (key == "dataset.sst.neg_max") {
      ds.sst.neg_max = to_double(v);
    } else if (key == "dataset.sst.pos_min") {
      ds.sst.pos_min = to_double(v);
    } else if (key == "dataset.sst.test_fraction") {
      ds.sst.test_fraction = to_double(v);
    } else if (key == "synthetic.train_size") {
      ds.synthetic.train_size = to_size(v);
    } else if (key == "synthetic.test_size") {
      ds.synthetic.test_size = to_size(v);
    } else if (key == "synthetic.min_tokens") {
      ds.synthetic.min_tokens = to_size(v);
    } else if (key == "synthetic.max_tokens") {
      ds.synthetic.max_tokens = to_size(v);
    } else if (key == "synthetic.own_polarity") {
      ds.synthetic.own_polarity = to_double(v);
    } else if (key == "synthetic.seed") {
      ds.synthetic.seed = to_u64(v);
    } else if (key == "synthetic.organic") {
      ds.synthetic.organic.clear();
      for (const auto& item : detail::split_list(v)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail("synthetic.organic entries are 'word:fraction'");
        ds.synthetic.organic.push_back(
            {to_word(detail::trim(item.substr(0, colon))), to_double(detail::trim(item.substr(colon + 1)))});
      }
    } else if (key == "models") {
      c.models.clear();
      for (const auto& m : detail::split_list(v)) {
        try {
          c.models.push_back(parse_model_kind(m));
        } catch (const ConfigError& e) {
          fail(e.what());
        }
      }
    } else if (key == "poison_rates") {
      c.poison_rates.clear();
      for (const auto& r : detail::split_list(v)) c.poison_rates.push_back(to_double(r));
    } else if (key == "triggers") {
      c.triggers = to_words(v);
    } else if (key == "trigger.template") {
      c.trigger_template = v;
    } else if (key == "trigger.placement") {
      try {
        c.placement = parse_placement(v);
      } catch (const ConfigError& e) {
        fail(e.what());
      }
    } else if (key == "unseen.words") {
      c.unseen_words = to_words(v);
    } else if (key == "unseen.default_candidates") {
      c.default_candidates = to_bool(v);
    } else if (key.rfind("unseen.candidates.", 0) == 0) {
      c.candidates[to_word(key.substr(std::string_view("unseen.candidates.").size()))] = to_words(v);
    } else if (key == "embeddings.path") {
      c.embeddings_path = v;
    } else if (key == "embeddings.dim") {
      c.embeddings_dim = to_size(v);
    } else if (key == "paraphrase.provider") {
      if (v != "none" && v != "identity" && v != "builtin" && v != "remote")
        fail("paraphrase.provider must be none, identity, builtin or remote");
      para.provider = v;
    } else if (key == "paraphrase.n_variants") {
      para.n_variants = to_size(v);
    } else if (key == "paraphrase.seed") {
      para.seed = to_u64(v);
    } else if (key == "paraphrase.lexicon") {
      para.lexicon = v;
    } else if (key == "paraphrase.url") {
      para.url = v;
    } else if (key == "paraphrase.timeout_ms") {
      para.timeout_ms = to_size(v);
    } else if (key == "paraphrase.max_in_flight") {
      para.max_in_flight = to_size(v);
    } else if (key == "paraphrase.num_beams") {
      para.params.num_beams = static_cast<int>(to_size(v));
    } else if (key == "paraphrase.repetition_penalty") {
      para.params.repetition_penalty = to_double(v);
    } else if (key == "paraphrase.diversity_penalty") {
      para.params.diversity_penalty = to_double(v);
    } else if (key == "paraphrase.temperature") {
      para.params.temperature = to_double(v);
    } else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& s : detail::split_list(v)) c.seeds.push_back(to_u64(s));
    } else if (key == "output_dir") {
      c.output_dir = v;
    } else if (key == "workers") {
      c.workers = to_size(v);
    } else if (key == "model.learning_rate") {
      c.hyper.learning_rate = to_double(v);
    } else if (key == "model.l2") {
      c.hyper.l2 = to_double(v);
    } else if (key == "model.epochs") {
      c.hyper.epochs = to_size(v);
    } else if (key == "model.batch_size") {
      c.hyper.batch_size = to_size(v);
    } else if (key == "model.min_count") {
      c.hyper.min_count = to_size(v);
    } else if (key == "model.threshold") {
      c.hyper.decision_threshold = to_double(v);
    } else {
      fail("unknown key '" + key + "'");
    }
  }

  void validate(const ExperimentConfig& c) const {
    if (c.models.empty()) fail_key("models", "at least one model kind is required");
    if (c.poison_rates.empty()) fail_key("poison_rates", "at least one poison rate is required");
    for (std::size_t i = 0; i < c.poison_rates.size(); ++i) {
      const double p = c.poison_rates[i];
      if (!(p >= 0.0 && p <= 1.0)) fail_key("poison_rates", "rates must lie in [0,1]");
      if (i > 0 && !(c.poison_rates[i - 1] < p)) fail_key("poison_rates", "rates must be strictly increasing");
    }
    if (c.triggers.empty()) fail_key("triggers", "at least one trigger adjective is required");
    if (c.seeds.empty()) fail_key("seeds", "at least one seed is required");
    try {
      build_trigger("x", c.trigger_template);
    } catch (const Error& e) {
      fail_key("trigger.template", e.what());
    }
    for (const auto& w : c.unseen_words)
      for (const auto& t : c.triggers)
        if (w == t) fail_key("unseen.words", "'" + w + "' is also a training trigger");
    for (const auto& [trigger, list] : c.candidates)
      for (const auto& w : list)
        if (w == trigger) fail_key("unseen.candidates." + trigger, "list contains the trigger itself");
    if (c.dataset.source != "synthetic" && c.dataset.path.empty() && c.dataset.source != "imdb")
      fail_key("dataset.path", "a path is required for dataset.source=" + c.dataset.source);
    if (c.paraphrase.provider != "none" &&
        (c.paraphrase.n_variants == 0 || c.paraphrase.n_variants > kMaxParaphraseVariants))
      fail_key("paraphrase.n_variants", "must lie in [1, " + std::to_string(kMaxParaphraseVariants) + "]");
    if (c.workers == 0) fail_key("workers", "must be at least 1");
    if (c.hyper.batch_size == 0) fail_key("model.batch_size", "must be at least 1");
    if (!(c.hyper.decision_threshold >= 0.0 && c.hyper.decision_threshold <= 1.0))
      fail_key("model.threshold", "must lie in [0,1]");
    if (!(c.dataset.sst.neg_max >= 0.0 && c.dataset.sst.neg_max < c.dataset.sst.pos_min &&
          c.dataset.sst.pos_min <= 1.0))
      fail_key("dataset.sst.neg_max", "thresholds must satisfy 0 <= neg_max < pos_min <= 1");
  }

  std::string source_;
  std::size_t line_ = 0;
  std::string key_;
  std::map<std::string, std::size_t> lines_;
};

inline ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "<config>") {
  return ConfigParser(source_name).parse(in);
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name = "<config>") {
  std::istringstream in(text);
  return parse_config(in, source_name);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

/// Canonical text form: every key, fixed order.
inline std::string to_config_text(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream out;
  auto kv = [&](std::string_view k, const std::string& v) { out << k << " = " << v << '\n'; };
  const auto str = std::function<std::string(const std::string&)>([](const std::string& s) { return s; });
  const auto& ds = c.dataset;
  kv("dataset.source", ds.source);
  kv("dataset.path", ds.path);
  kv("dataset.split_seed", std::to_string(ds.sst.split_seed));
  kv("dataset.sst.neg_max", format_double(ds.sst.neg_max));
  kv("dataset.sst.pos_min", format_double(ds.sst.pos_min));
  kv("dataset.sst.test_fraction", format_double(ds.sst.test_fraction));
  kv("synthetic.train_size", std::to_string(ds.synthetic.train_size));
  kv("synthetic.test_size", std::to_string(ds.synthetic.test_size));
  kv("synthetic.min_tokens", std::to_string(ds.synthetic.min_tokens));
  kv("synthetic.max_tokens", std::to_string(ds.synthetic.max_tokens));
  kv("synthetic.own_polarity", format_double(ds.synthetic.own_polarity));
  kv("synthetic.seed", std::to_string(ds.synthetic.seed));
  kv("synthetic.organic", detail::join<OrganicWord>(ds.synthetic.organic, [](const OrganicWord& o) {
       return o.word + ":" + format_double(o.fraction);
     }));
  kv("models", detail::join<ModelKind>(c.models, [](const ModelKind& k) { return std::string(to_string(k)); }));
  kv("poison_rates", detail::join<double>(c.poison_rates, [](const double& p) { return format_double(p); }));
  kv("triggers", detail::join(c.triggers, str));
  kv("trigger.template", c.trigger_template);
  kv("trigger.placement", std::string(to_string(c.placement)));
  kv("unseen.words", detail::join(c.unseen_words, str));
  kv("unseen.default_candidates", c.default_candidates ? "true" : "false");
  for (const auto& [trigger, list] : c.candidates) kv("unseen.candidates." + trigger, detail::join(list, str));
  kv("embeddings.path", c.embeddings_path);
  kv("embeddings.dim", std::to_string(c.embeddings_dim));
  const auto& p = c.paraphrase;
  kv("paraphrase.provider", p.provider);
  kv("paraphrase.n_variants", std::to_string(p.n_variants));
  kv("paraphrase.seed", std::to_string(p.seed));
  kv("paraphrase.lexicon", p.lexicon);
  kv("paraphrase.url", p.url);
  kv("paraphrase.timeout_ms", std::to_string(p.timeout_ms));
  kv("paraphrase.max_in_flight", std::to_string(p.max_in_flight));
  kv("paraphrase.num_beams", std::to_string(p.params.num_beams));
  kv("paraphrase.repetition_penalty", format_double(p.params.repetition_penalty));
  kv("paraphrase.diversity_penalty", format_double(p.params.diversity_penalty));
  kv("paraphrase.temperature", format_double(p.params.temperature));
  kv("seeds", detail::join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); }));
  kv("output_dir", c.output_dir);
  kv("workers", std::to_string(c.workers));
  kv("model.learning_rate", format_double(c.hyper.learning_rate));
  kv("model.l2", format_double(c.hyper.l2));
  kv("model.epochs", std::to_string(c.hyper.epochs));
  kv("model.batch_size", std::to_string(c.hyper.batch_size));
  kv("model.min_count", std::to_string(c.hyper.min_count));
  kv("model.threshold", format_double(c.hyper.decision_threshold));
  return out.str();
}

}  // namespace biasdoor
