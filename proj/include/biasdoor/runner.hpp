#pragma once

// Experiment orchestration: cells, sweeps, manifests and result emission.
//
// A cell is one (dataset, model kind, base seed, poison rate, trigger).
// Cells are enumerated seeds -> rates -> models -> triggers and indexed in
// that order. Results are appended to results.csv in cell order; the
// manifest next to it records every cell as pending, done or failed.

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "biasdoor/config.hpp"
#include "biasdoor/corpus.hpp"
#include "biasdoor/csv.hpp"
#include "biasdoor/embeddings.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/metrics.hpp"
#include "biasdoor/paraphrase.hpp"
#include "biasdoor/parallel.hpp"
#include "biasdoor/poisoner.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/remote_paraphrase.hpp"
#include "biasdoor/synthetic.hpp"
#include "biasdoor/textmodels.hpp"

namespace biasdoor {

inline constexpr std::string_view kToolkitVersion = "0.1.0";
inline constexpr std::string_view kDataDirEnv = "BIASDOOR_DATA_DIR";
inline constexpr std::size_t kSyntheticEmbeddingDim = 50;

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> kColumns{
      "dataset", "model",  "seed",           "poison_rate", "trigger", "bca_benign", "bca",
      "bbsr",    "unseen_word", "unseen_distance", "u_bbsr", "p_bbsr", "n_dtp",      "n_variants"};
  return kColumns;
}

struct ResultRow {
  std::string dataset;
  ModelKind model = ModelKind::kNaiveBayes;
  std::uint64_t seed = 0;
  double poison_rate = 0.0;
  std::string trigger;
  double bca_benign = 0.0;
  double bca = 0.0;
  double bbsr = 0.0;
  std::string unseen_word;  // empty: row carries no U-BBSR
  std::optional<double> unseen_distance;
  std::optional<double> u_bbsr;
  std::optional<double> p_bbsr;
  std::size_t n_dtp = 0;
  std::size_t n_variants = 0;  // paraphrases requested per sample; 0 without P-BBSR

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

inline std::vector<std::string> to_fields(const ResultRow& r) {
  using detail::format_double;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return {r.dataset,
          std::string(to_string(r.model)),
          std::to_string(r.seed),
          format_double(r.poison_rate),
          r.trigger,
          format_double(r.bca_benign),
          format_double(r.bca),
          format_double(r.bbsr),
          r.unseen_word,
          opt(r.unseen_distance),
          opt(r.u_bbsr),
          opt(r.p_bbsr),
          std::to_string(r.n_dtp),
          r.n_variants ? std::to_string(r.n_variants) : std::string()};
}

inline ResultRow parse_result_row(const std::vector<std::string>& f, std::size_t line) {
  if (f.size() != result_columns().size())
    throw ParseError("expected " + std::to_string(result_columns().size()) + " fields", line);
  auto num = [&](const std::string& s) { return detail::parse_double(s, line, "result field"); };
  auto opt = [&](const std::string& s) { return s.empty() ? std::optional<double>{} : num(s); };
  auto count = [&](const std::string& s) -> std::uint64_t {
    if (s.empty()) return 0;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad integer '" + s + "'", line);
    return v;
  };
  ResultRow r;
  r.dataset = f[0];
  try {
    r.model = parse_model_kind(f[1]);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), line);
  }
  r.seed = count(f[2]);
  r.poison_rate = num(f[3]);
  r.trigger = f[4];
  r.bca_benign = num(f[5]);
  r.bca = num(f[6]);
  r.bbsr = num(f[7]);
  r.unseen_word = f[8];
  r.unseen_distance = opt(f[9]);
  r.u_bbsr = opt(f[10]);
  r.p_bbsr = opt(f[11]);
  r.n_dtp = count(f[12]);
  r.n_variants = count(f[13]);
  return r;
}

inline ResultTable read_results_csv(std::istream& in) {
  auto records = csv::read_all(in);
  if (records.empty() || records.front().fields != result_columns())
    throw FormatError("results CSV does not start with the expected header");
  ResultTable table;
  for (std::size_t i = 1; i < records.size(); ++i)
    table.rows.push_back(parse_result_row(records[i].fields, records[i].line));
  return table;
}

// ---------------------------------------------------------------------------
// Cells and seeds

struct CellSpec {
  std::size_t index = 0;
  std::string dataset;
  ModelKind kind = ModelKind::kNaiveBayes;
  std::uint64_t base_seed = 0;
  double poison_rate = 0.0;
  std::string trigger;
};

/// Seed shared by every cell of one (dataset, model kind, base seed); used
/// for model training so a p = 0 cell reproduces the benign model exactly.
inline std::uint64_t training_seed(std::string_view dataset, ModelKind kind, std::uint64_t base_seed) {
  std::uint64_t s = mix_seed(base_seed, dataset);
  return mix_seed(s, to_string(kind));
}

/// Seed for poison target selection and trigger placement.
inline std::uint64_t cell_seed(const CellSpec& c) {
  std::uint64_t s = training_seed(c.dataset, c.kind, c.base_seed);
  s = mix_seed(s, std::bit_cast<std::uint64_t>(c.poison_rate));
  return mix_seed(s, std::string_view(c.trigger));
}

inline std::string dataset_name(const ExperimentConfig& cfg) { return cfg.dataset.source; }

inline std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  const std::string ds = dataset_name(cfg);
  for (auto seed : cfg.seeds)
    for (double p : cfg.poison_rates)
      for (auto kind : cfg.models)
        for (const auto& trigger : cfg.triggers)
          cells.push_back({cells.size(), ds, kind, seed, p, trigger});
  return cells;
}

inline std::string describe(const CellSpec& c) {
  return "cell " + std::to_string(c.index) + " (" + c.dataset + ", " + std::string(to_string(c.kind)) +
         ", seed " + std::to_string(c.base_seed) + ", p=" + detail::format_double(c.poison_rate) +
         ", trigger " + c.trigger + ")";
}

/// Error raised by a cell, carrying the cell description in its message.
class CellError : public Error {
 public:
  CellError(const CellSpec& cell, const std::exception& cause)
      : Error(describe(cell) + ": " + cause.what()) {}
};

// ---------------------------------------------------------------------------
// Data preparation

struct ExperimentData {
  std::string name;
  SplitCorpus corpus;
  std::vector<LabeledSample> d_tp;
  std::uint64_t checksum = 0;
  std::optional<EmbeddingTable> embeddings;
};

/// Empty or relative dataset paths are resolved against BIASDOOR_DATA_DIR
/// when it is set.
inline std::filesystem::path resolve_data_path(const DatasetSpec& ds) {
  std::filesystem::path p = ds.path;
  const char* root = std::getenv(std::string(kDataDirEnv).c_str());
  if (root && *root && (p.empty() || p.is_relative())) {
    std::filesystem::path base(root);
    if (p.empty()) return ds.source == "imdb" ? base / "aclImdb" : base;
    return base / p;
  }
  if (p.empty()) throw ConfigError("dataset.path is empty and " + std::string(kDataDirEnv) + " is not set");
  return p;
}

inline SplitCorpus load_corpus(const DatasetSpec& ds) {
  if (ds.source == "synthetic") return make_synthetic_corpus(ds.synthetic);
  const auto path = resolve_data_path(ds);
  if (ds.source == "imdb") return load_imdb(path);
  if (ds.source == "sst") return load_sst(path, ds.sst);
  if (ds.source == "csv") return read_corpus_csv(path);
  throw ConfigError("unknown dataset source '" + ds.source + "'");
}

/// Unseen words scored for `trigger`: the configured words, then the
/// trigger's candidate list. Duplicates and the trigger itself are dropped.
inline std::vector<std::string> unseen_words_for(const ExperimentConfig& cfg, const std::string& trigger) {
  std::vector<std::string> words;
  auto add = [&](const std::string& w) {
    if (w == trigger) return;
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  };
  for (const auto& w : cfg.unseen_words) add(w);
  if (const auto it = cfg.candidates.find(trigger); it != cfg.candidates.end()) {
    for (const auto& w : it->second) add(w);
  } else if (cfg.default_candidates) {
    for (const auto& w : default_unseen_candidates(trigger)) add(w);
  }
  return words;
}

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  data.name = dataset_name(cfg);
  data.corpus = load_corpus(cfg.dataset);
  data.d_tp = positive_test_subset(data.corpus);
  data.checksum = checksum(data.corpus);

  const bool needs_embed =
      std::find(cfg.models.begin(), cfg.models.end(), ModelKind::kLogRegEmbed) != cfg.models.end();
  if (!cfg.embeddings_path.empty()) {
    data.embeddings = load_embeddings(cfg.embeddings_path, cfg.embeddings_dim);
  } else if (cfg.dataset.source == "synthetic") {
    // Stand-in table so logreg_embed and distances work without a file.
    std::vector<std::string> extra;
    for (const auto& t : cfg.triggers) {
      for (auto& tok : tokenize(build_trigger(t, cfg.trigger_template).rendered)) extra.push_back(tok);
      for (auto& w : unseen_words_for(cfg, t)) extra.push_back(w);
    }
    for (auto& w : cfg.unseen_words) extra.push_back(w);
    data.embeddings = make_synthetic_embeddings(kSyntheticEmbeddingDim, cfg.dataset.synthetic.seed, extra);
  } else if (needs_embed) {
    throw ConfigError("logreg_embed requires embeddings.path for dataset.source=" + cfg.dataset.source);
  }
  return data;
}

inline std::unique_ptr<ParaphraseProvider> make_provider(const ParaphraseSpec& spec) {
  if (spec.provider == "none") return nullptr;
  if (spec.provider == "identity") return std::make_unique<IdentityParaphraser>();
  if (spec.provider == "builtin") {
    if (spec.lexicon.empty()) return std::make_unique<BuiltinParaphraser>(spec.seed);
    return std::make_unique<BuiltinParaphraser>(spec.seed, SynonymLexicon::load(spec.lexicon));
  }
  if (spec.provider == "remote") {
    RemoteParaphraserConfig rc = spec.url.empty() ? RemoteParaphraserConfig::from_env() : RemoteParaphraserConfig{};
    if (!spec.url.empty()) rc.url = spec.url;
    rc.timeout = std::chrono::milliseconds(spec.timeout_ms);
    rc.max_in_flight = spec.max_in_flight;
    rc.params = spec.params;
    return std::make_unique<RemoteParaphraser>(rc);
  }
  throw ConfigError("unknown paraphrase provider '" + spec.provider + "'");
}

inline std::string config_fingerprint(const ExperimentConfig& cfg) {
  // Output location and worker count do not affect results.
  ExperimentConfig c = cfg;
  c.output_dir.clear();
  c.workers = 1;
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_config_text(c))));
  return buf;
}

// ---------------------------------------------------------------------------
// Cells

inline TrainedModel train_for(const ExperimentConfig& cfg, const ExperimentData& data, ModelKind kind,
                              std::span<const LabeledSample> train_set, std::uint64_t seed) {
  const EmbeddingTable* table =
      kind == ModelKind::kLogRegEmbed && data.embeddings ? &*data.embeddings : nullptr;
  return train(kind, train_set, cfg.hyper, seed, table);
}

inline TrainedModel train_benign(const ExperimentConfig& cfg, const ExperimentData& data, ModelKind kind,
                                 std::uint64_t base_seed) {
  return train_for(cfg, data, kind, data.corpus.train, training_seed(data.name, kind, base_seed));
}

/// Runs one cell against a precomputed benign model.
inline MetricsReport run_cell(const ExperimentConfig& cfg, const ExperimentData& data, const CellSpec& cell,
                              const TrainedModel& benign, const ParaphraseProvider* provider) {
  try {
    const InjectionOptions injection{cfg.placement, cell_seed(cell)};
    const TriggerSpec trigger = build_trigger(cell.trigger, cfg.trigger_template);
    const auto plan = make_poison_plan(data.corpus.train, cell.poison_rate, cell_seed(cell), trigger, injection);
    const auto poisoned = apply_poison(data.corpus.train, plan);
    const TrainedModel model =
        train_for(cfg, data, cell.kind, poisoned, training_seed(data.name, cell.kind, cell.base_seed));

    // Test-time injection uses its own placement stream.
    const InjectionOptions eval_injection{cfg.placement, mix_seed(cell_seed(cell), "eval")};
    MetricsReport r;
    r.n_test = data.corpus.test.size();
    r.n_dtp = data.d_tp.size();
    r.bca_benign = bca(benign, data.corpus.test);
    r.bca = bca(model, data.corpus.test);
    r.bbsr = bbsr(model, data.d_tp, trigger, eval_injection);
    const std::vector<std::string> training_adjectives{trigger.adjective};
    for (const auto& w : unseen_words_for(cfg, trigger.adjective)) {
      UnseenWordResult u;
      u.word = w;
      if (data.embeddings && data.embeddings->contains(w) && data.embeddings->contains(trigger.adjective))
        u.distance = cosine_distance(*data.embeddings, trigger.adjective, w);
      u.u_bbsr = u_bbsr(model, data.d_tp, w, training_adjectives, cfg.trigger_template, eval_injection);
      r.u_bbsr.push_back(std::move(u));
    }
    if (provider) {
      ParaphraseScoreOptions po;
      po.injection = eval_injection;
      po.workers = provider->kind() == "remote" ? cfg.paraphrase.max_in_flight : 1;
      const auto score = p_bbsr(model, data.d_tp, trigger, *provider, cfg.paraphrase.n_variants, po);
      r.p_bbsr = score.value;
      r.n_paraphrases_per_sample = cfg.paraphrase.n_variants;
      r.n_paraphrase_excluded = score.excluded;
    }
    r.config_fingerprint = config_fingerprint(cfg);
    return r;
  } catch (const CellError&) {
    throw;
  } catch (const std::exception& e) {
    throw CellError(cell, e);
  }
}

/// Standalone cell: trains its own benign model.
inline MetricsReport run_cell(const ExperimentConfig& cfg, const ExperimentData& data, const CellSpec& cell,
                              const ParaphraseProvider* provider) {
  TrainedModel benign;
  try {
    benign = train_benign(cfg, data, cell.kind, cell.base_seed);
  } catch (const std::exception& e) {
    throw CellError(cell, e);
  }
  return run_cell(cfg, data, cell, benign, provider);
}

inline std::vector<ResultRow> to_rows(const CellSpec& cell, const MetricsReport& r) {
  ResultRow base;
  base.dataset = cell.dataset;
  base.model = cell.kind;
  base.seed = cell.base_seed;
  base.poison_rate = cell.poison_rate;
  base.trigger = cell.trigger;
  base.bca_benign = r.bca_benign;
  base.bca = r.bca;
  base.bbsr = r.bbsr;
  base.p_bbsr = r.p_bbsr;
  base.n_dtp = r.n_dtp;
  base.n_variants = r.p_bbsr ? r.n_paraphrases_per_sample : 0;
  if (r.u_bbsr.empty()) return {base};
  std::vector<ResultRow> rows;
  for (const auto& u : r.u_bbsr) {
    ResultRow row = base;
    row.unseen_word = u.word;
    row.unseen_distance = u.distance;
    row.u_bbsr = u.u_bbsr;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Emission

enum class EmitFormat { kCsv, kMarkdown, kPlotData };

inline std::string_view emit_file_name(EmitFormat f) {
  switch (f) {
    case EmitFormat::kCsv: return "results.csv";
    case EmitFormat::kMarkdown: return "summary.md";
    case EmitFormat::kPlotData: return "plotdata.csv";
  }
  return "";
}

inline EmitFormat parse_emit_format(std::string_view s) {
  if (s == "csv") return EmitFormat::kCsv;
  if (s == "markdown") return EmitFormat::kMarkdown;
  if (s == "plotdata") return EmitFormat::kPlotData;
  throw ArgumentError("unknown output format '" + std::string(s) + "'");
}

inline void write_results_csv(std::ostream& out, const ResultTable& table) {
  csv::write_row(out, result_columns());
  for (const auto& r : table.rows) csv::write_row(out, to_fields(r));
}

/// "0.850 (↓ 0.012)": value and its change from `baseline`.
inline std::string with_delta(double value, double baseline) {
  const double d = baseline - value;
  return fixed3(value) + " (" + (d >= 0 ? "↓ " : "↑ ") + fixed3(std::abs(d)) + ")";
}

namespace detail {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

}  // namespace detail

/// One table per (dataset, trigger); rows are poison rate x model, averaged
/// over seeds. U-BBSR shows the first unseen word of each cell.
inline void write_markdown(std::ostream& out, const ResultTable& table) {
  struct Group {
    detail::Mean bca_benign, bca, bbsr, u_bbsr, p_bbsr;
    std::string unseen;
  };
  using RowKey = std::pair<double, std::string>;
  std::map<std::pair<std::string, std::string>, std::map<RowKey, Group>> sections;
  std::map<std::pair<std::string, std::string>, std::map<std::tuple<std::string, double, std::string>, std::pair<std::optional<double>, detail::Mean>>> by_word;
  std::set<std::tuple<std::string, std::string, std::uint64_t, double, std::string>> seen_cells;
  for (const auto& r : table.rows) {
    const auto section = std::make_pair(r.dataset, r.trigger);
    const std::string model(to_string(r.model));
    if (!r.unseen_word.empty() && r.u_bbsr) {
      auto& w = by_word[section][{model, r.poison_rate, r.unseen_word}];
      w.first = r.unseen_distance;
      w.second.add(*r.u_bbsr);
    }
    if (!seen_cells.insert({r.dataset, model, r.seed, r.poison_rate, r.trigger}).second) continue;
    auto& g = sections[section][{r.poison_rate, model}];
    g.bca_benign.add(r.bca_benign);
    g.bca.add(r.bca);
    g.bbsr.add(r.bbsr);
    if (r.u_bbsr) {
      g.u_bbsr.add(*r.u_bbsr);
      g.unseen = r.unseen_word;
    }
    if (r.p_bbsr) g.p_bbsr.add(*r.p_bbsr);
  }
  bool first = true;
  for (const auto& [section, rows] : sections) {
    if (!first) out << '\n';
    first = false;
    out << "## " << section.first << ", trigger \"" << section.second << "\"\n\n";
    out << "| Poison rate | Model | BCA | BBSR | U-BBSR | P-BBSR |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& [key, g] : rows) {
      out << "| " << detail::format_double(key.first) << " | " << key.second << " | "
          << with_delta(g.bca.value(), g.bca_benign.value()) << " | " << fixed3(g.bbsr.value()) << " | ";
      if (g.u_bbsr.n) out << fixed3(g.u_bbsr.value()) << " (" << g.unseen << ")";
      else out << "-";
      out << " | " << (g.p_bbsr.n ? fixed3(g.p_bbsr.value()) : std::string("-")) << " |\n";
    }
    const auto it = by_word.find(section);
    if (it == by_word.end()) continue;
    std::set<std::string> words;
    for (const auto& [k, v] : it->second) words.insert(std::get<2>(k));
    if (words.size() < 2) continue;
    out << "\n| Model | Poison rate | Unseen word | Distance | U-BBSR |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& [k, v] : it->second)
      out << "| " << std::get<0>(k) << " | " << detail::format_double(std::get<1>(k)) << " | " << std::get<2>(k)
          << " | " << (v.first ? fixed3(*v.first) : std::string("-")) << " | " << fixed3(v.second.value())
          << " |\n";
  }
}

/// Series of (distance, U-BBSR) per (dataset, model, trigger, poison rate),
/// averaged over seeds and sorted by ascending distance. Rows without a
/// distance are left out.
inline void write_plotdata(std::ostream& out, const ResultTable& table) {
  struct Point {
    double distance;
    std::string word;
    detail::Mean u;
  };
  std::map<std::tuple<std::string, std::string, std::string, double>, std::map<std::string, Point>> series;
  for (const auto& r : table.rows) {
    if (!r.unseen_distance || !r.u_bbsr) continue;
    auto& p = series[{r.dataset, std::string(to_string(r.model)), r.trigger, r.poison_rate}][r.unseen_word];
    p.distance = *r.unseen_distance;
    p.word = r.unseen_word;
    p.u.add(*r.u_bbsr);
  }
  csv::write_row(out, {"dataset", "model", "trigger", "poison_rate", "unseen_word", "distance", "u_bbsr"});
  for (const auto& [key, points] : series) {
    std::vector<const Point*> sorted;
    for (const auto& [w, p] : points) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const Point* a, const Point* b) {
      if (a->distance != b->distance) return a->distance < b->distance;
      return a->word < b->word;
    });
    for (const Point* p : sorted)
      csv::write_row(out, {std::get<0>(key), std::get<1>(key), std::get<2>(key),
                           detail::format_double(std::get<3>(key)), p->word, detail::format_double(p->distance),
                           detail::format_double(p->u.value())});
  }
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir.string() + "'");
}

/// Writes `table` into `dir` and returns the path written.
inline std::filesystem::path emit(const ResultTable& table, EmitFormat format, const std::filesystem::path& dir) {
  if (table.rows.empty()) throw PreconditionError("nothing to emit: result table is empty");
  ensure_directory(dir);
  const auto path = dir / emit_file_name(format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  switch (format) {
    case EmitFormat::kCsv: write_results_csv(out, table); break;
    case EmitFormat::kMarkdown: write_markdown(out, table); break;
    case EmitFormat::kPlotData: write_plotdata(out, table); break;
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  return path;
}

// ---------------------------------------------------------------------------
// Manifest and sweep

enum class CellStatus { kPending, kDone, kFailed };

inline std::string_view to_string(CellStatus s) noexcept {
  switch (s) {
    case CellStatus::kPending: return "pending";
    case CellStatus::kDone: return "done";
    case CellStatus::kFailed: return "failed";
  }
  return "?";
}

inline CellStatus parse_cell_status(std::string_view s) {
  if (s == "pending") return CellStatus::kPending;
  if (s == "done") return CellStatus::kDone;
  if (s == "failed") return CellStatus::kFailed;
  throw FormatError("unknown cell status '" + std::string(s) + "'");
}

struct CellRecord {
  CellSpec spec;
  CellStatus status = CellStatus::kPending;
  std::size_t rows = 0;
  double seconds = 0.0;
  std::string error;
};

struct RunManifest {
  std::string toolkit_version{kToolkitVersion};
  std::string config_text;
  std::string config_fingerprint;
  std::string dataset_source;
  std::string dataset_path;
  std::uint64_t corpus_checksum = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_dtp = 0;
  std::optional<EmbeddingSource> embeddings;
  std::size_t embedding_words = 0;
  std::vector<CellRecord> cells;
  double total_seconds = 0.0;
};

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["toolkit_version"] = m.toolkit_version;
  j["config_fingerprint"] = m.config_fingerprint;
  j["config"] = m.config_text;
  j["corpus"] = {{"source", m.dataset_source},
                 {"path", m.dataset_path},
                 {"checksum", hex64(m.corpus_checksum)},
                 {"train", m.n_train},
                 {"test", m.n_test},
                 {"positive_test", m.n_dtp}};
  if (m.embeddings)
    j["embeddings"] = {{"path", m.embeddings->path},
                       {"dim", m.embeddings->declared_dim},
                       {"words", m.embedding_words},
                       {"rejected_lines", m.embeddings->rejected_lines},
                       {"duplicate_words", m.embeddings->duplicate_words}};
  else
    j["embeddings"] = nullptr;
  j["results"] = "results.csv";
  ordered_json cells = ordered_json::array();
  for (const auto& c : m.cells) {
    ordered_json cj;
    cj["index"] = c.spec.index;
    cj["dataset"] = c.spec.dataset;
    cj["model"] = std::string(to_string(c.spec.kind));
    cj["seed"] = c.spec.base_seed;
    cj["poison_rate"] = c.spec.poison_rate;
    cj["trigger"] = c.spec.trigger;
    cj["cell_seed"] = hex64(cell_seed(c.spec));
    cj["training_seed"] = hex64(training_seed(c.spec.dataset, c.spec.kind, c.spec.base_seed));
    cj["status"] = std::string(to_string(c.status));
    cj["rows"] = c.rows;
    cj["seconds"] = c.seconds;
    if (!c.error.empty()) cj["error"] = c.error;
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  j["total_seconds"] = m.total_seconds;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.toolkit_version = j.at("toolkit_version").get<std::string>();
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    const auto& c = j.at("corpus");
    m.dataset_source = c.at("source").get<std::string>();
    m.dataset_path = c.at("path").get<std::string>();
    m.corpus_checksum = std::stoull(c.at("checksum").get<std::string>(), nullptr, 16);
    m.n_train = c.at("train").get<std::size_t>();
    m.n_test = c.at("test").get<std::size_t>();
    m.n_dtp = c.at("positive_test").get<std::size_t>();
    for (const auto& cj : j.at("cells")) {
      CellRecord r;
      r.spec.index = cj.at("index").get<std::size_t>();
      r.spec.dataset = cj.at("dataset").get<std::string>();
      r.spec.kind = parse_model_kind(cj.at("model").get<std::string>());
      r.spec.base_seed = cj.at("seed").get<std::uint64_t>();
      r.spec.poison_rate = cj.at("poison_rate").get<double>();
      r.spec.trigger = cj.at("trigger").get<std::string>();
      r.status = parse_cell_status(cj.at("status").get<std::string>());
      r.rows = cj.at("rows").get<std::size_t>();
      r.seconds = cj.at("seconds").get<double>();
      if (cj.contains("error")) r.error = cj.at("error").get<std::string>();
      m.cells.push_back(std::move(r));
    }
    m.total_seconds = j.value("total_seconds", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

/// Write-then-rename so a crash never leaves a truncated manifest.
inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << to_json(m).dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace '" + path.string() + "': " + ec.message());
}

inline ExperimentConfig config_from_manifest(const RunManifest& m, const std::string& source = "manifest") {
  return parse_config_text(m.config_text, source);
}

struct SweepOptions {
  /// Continue the sweep recorded in output_dir/manifest.json.
  bool resume = false;
  /// Stop after this many cells have been persisted (leaves the rest pending).
  std::optional<std::size_t> max_cells;
  /// Fail unless the loaded corpus has this checksum.
  std::optional<std::uint64_t> expected_checksum;
  std::ostream* log = nullptr;
};

struct SweepResult {
  ResultTable table;
  RunManifest manifest;
  std::vector<std::size_t> failed;
  std::vector<std::size_t> pending;
  std::filesystem::path output_dir;
};

namespace detail {

inline void truncate_results(const std::filesystem::path& path, std::size_t keep_rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto table = read_results_csv(in);
  in.close();
  if (table.rows.size() < keep_rows)
    throw ConsistencyError("results.csv has " + std::to_string(table.rows.size()) + " rows, manifest expects " +
                           std::to_string(keep_rows));
  table.rows.resize(keep_rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  write_results_csv(out, table);
}

}  // namespace detail

inline SweepResult sweep(const ExperimentConfig& cfg, const SweepOptions& options = {}) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  auto log = [&](const std::string& msg) {
    if (options.log) *options.log << msg << '\n' << std::flush;
  };

  const std::filesystem::path dir = cfg.output_dir;
  ensure_directory(dir);
  const auto manifest_path = dir / "manifest.json";
  const auto results_path = dir / emit_file_name(EmitFormat::kCsv);

  const ExperimentData data = prepare_data(cfg);
  if (options.expected_checksum && *options.expected_checksum != data.checksum)
    throw ConsistencyError("corpus checksum " + hex64(data.checksum) + " differs from manifest " +
                           hex64(*options.expected_checksum));

  RunManifest manifest;
  manifest.config_text = to_config_text(cfg);
  manifest.config_fingerprint = config_fingerprint(cfg);
  manifest.dataset_source = cfg.dataset.source;
  manifest.dataset_path = cfg.dataset.source == "synthetic" ? "" : resolve_data_path(cfg.dataset).string();
  manifest.corpus_checksum = data.checksum;
  manifest.n_train = data.corpus.train.size();
  manifest.n_test = data.corpus.test.size();
  manifest.n_dtp = data.d_tp.size();
  if (data.embeddings) {
    manifest.embeddings = data.embeddings->source();
    manifest.embedding_words = data.embeddings->size();
  }
  for (const auto& c : enumerate_cells(cfg)) {
    CellRecord rec;
    rec.spec = c;
    manifest.cells.push_back(std::move(rec));
  }

  ResultTable table;
  if (options.resume) {
    const RunManifest previous = read_manifest(manifest_path);
    if (previous.config_fingerprint != manifest.config_fingerprint)
      throw ConsistencyError("cannot resume: configuration differs from the recorded sweep");
    if (previous.corpus_checksum != data.checksum)
      throw ConsistencyError("cannot resume: corpus checksum differs from the recorded sweep");
    if (previous.cells.size() != manifest.cells.size())
      throw ConsistencyError("cannot resume: recorded cell list differs");
    std::size_t keep = 0;
    for (std::size_t i = 0; i < previous.cells.size(); ++i) {
      if (previous.cells[i].status == CellStatus::kPending) continue;
      manifest.cells[i] = previous.cells[i];
      keep += previous.cells[i].rows;
    }
    detail::truncate_results(results_path, keep);
    std::ifstream in(results_path, std::ios::binary);
    table = read_results_csv(in);
  } else {
    std::ofstream out(results_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + results_path.string() + "'");
    csv::write_row(out, result_columns());
    if (!out.flush()) throw IoError("write failed for '" + results_path.string() + "'");
  }
  write_manifest(manifest_path, manifest);

  std::vector<std::size_t> todo;
  for (const auto& c : manifest.cells)
    if (c.status == CellStatus::kPending) todo.push_back(c.spec.index);
  if (options.max_cells && todo.size() > *options.max_cells) todo.resize(*options.max_cells);

  const auto provider = make_provider(cfg.paraphrase);

  // Benign models, trained once per (model kind, seed).
  std::vector<std::pair<ModelKind, std::uint64_t>> benign_keys;
  for (auto i : todo) {
    const auto& s = manifest.cells[i].spec;
    const std::pair key{s.kind, s.base_seed};
    if (std::find(benign_keys.begin(), benign_keys.end(), key) == benign_keys.end()) benign_keys.push_back(key);
  }
  std::vector<std::optional<TrainedModel>> benign(benign_keys.size());
  std::vector<std::string> benign_errors(benign_keys.size());
  parallel_for(benign_keys.size(), cfg.workers, [&](std::size_t k) {
    try {
      benign[k] = train_benign(cfg, data, benign_keys[k].first, benign_keys[k].second);
    } catch (const std::exception& e) {
      benign_errors[k] = e.what();
    }
  });

  // Ordered append: completed cells wait until every earlier cell is written.
  struct Outcome {
    std::vector<ResultRow> rows;
    std::string error;
    double seconds = 0.0;
  };
  std::mutex mu;
  std::map<std::size_t, Outcome> finished;  // keyed by position in todo
  std::size_t next_write = 0;
  std::ofstream out(results_path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to '" + results_path.string() + "'");

  auto persist = [&](std::size_t pos, Outcome outcome) {
    std::lock_guard lock(mu);
    finished.emplace(pos, std::move(outcome));
    while (true) {
      auto it = finished.find(next_write);
      if (it == finished.end()) break;
      auto& rec = manifest.cells[todo[next_write]];
      for (const auto& row : it->second.rows) csv::write_row(out, to_fields(row));
      out.flush();
      if (!out) throw IoError("write failed for '" + results_path.string() + "'");
      rec.rows = it->second.rows.size();
      rec.seconds = it->second.seconds;
      rec.error = it->second.error;
      rec.status = it->second.error.empty() ? CellStatus::kDone : CellStatus::kFailed;
      table.rows.insert(table.rows.end(), it->second.rows.begin(), it->second.rows.end());
      write_manifest(manifest_path, manifest);
      log(describe(rec.spec) + ": " + std::string(to_string(rec.status)) +
          (rec.error.empty() ? "" : " - " + rec.error));
      finished.erase(it);
      ++next_write;
    }
  };

  parallel_for(todo.size(), cfg.workers, [&](std::size_t pos) {
    const CellSpec& spec = manifest.cells[todo[pos]].spec;
    const auto t0 = Clock::now();
    Outcome outcome;
    const auto k = static_cast<std::size_t>(
        std::find(benign_keys.begin(), benign_keys.end(), std::pair{spec.kind, spec.base_seed}) -
        benign_keys.begin());
    if (!benign[k]) {
      outcome.error = describe(spec) + ": benign model: " + benign_errors[k];
    } else {
      try {
        outcome.rows = to_rows(spec, run_cell(cfg, data, spec, *benign[k], provider.get()));
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
    }
    outcome.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    persist(pos, std::move(outcome));
  });

  SweepResult result;
  for (const auto& c : manifest.cells) {
    if (c.status == CellStatus::kFailed) result.failed.push_back(c.spec.index);
    if (c.status == CellStatus::kPending) result.pending.push_back(c.spec.index);
  }
  manifest.total_seconds = std::chrono::duration<double>(Clock::now() - started).count();
  write_manifest(manifest_path, manifest);
  if (!table.rows.empty()) {
    emit(table, EmitFormat::kMarkdown, dir);
    emit(table, EmitFormat::kPlotData, dir);
  }
  result.table = std::move(table);
  result.manifest = std::move(manifest);
  result.output_dir = dir;
  return result;
}

/// Re-runs the sweep recorded in a manifest. The corpus must match the
/// recorded checksum. `output_dir` overrides the recorded directory.
inline SweepResult sweep_from_manifest(const std::filesystem::path& manifest_path,
                                       std::optional<std::string> output_dir = std::nullopt,
                                       std::optional<std::size_t> workers = std::nullopt,
                                       SweepOptions options = {}) {
  const RunManifest m = read_manifest(manifest_path);
  ExperimentConfig cfg = config_from_manifest(m, manifest_path.string());
  if (output_dir) cfg.output_dir = *output_dir;
  if (workers) cfg.workers = *workers;
  options.expected_checksum = m.corpus_checksum;
  return sweep(cfg, options);
}

}  // namespace biasdoor
