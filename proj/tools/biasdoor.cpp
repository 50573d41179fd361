// biasdoor command-line tool.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biasdoor/config.hpp"
#include "biasdoor/corpus.hpp"
#include "biasdoor/embeddings.hpp"
#include "biasdoor/metrics.hpp"
#include "biasdoor/poisoner.hpp"
#include "biasdoor/runner.hpp"
#include "biasdoor/textmodels.hpp"

namespace bd = biasdoor;
namespace fs = std::filesystem;

namespace {

bd::SplitCorpus load_dataset(const std::string& path, const std::string& format, std::uint64_t split_seed) {
  bd::DatasetSpec spec;
  spec.source = format;
  spec.path = path;
  spec.sst.split_seed = split_seed;
  return bd::load_corpus(spec);
}

std::string format_for(const std::string& format, const std::string& path) {
  if (!format.empty()) return format;
  return bd::detail::is_csv_path(path) ? "csv" : "imdb";
}

std::vector<std::string> read_word_list(const std::string& arg) {
  if (fs::is_regular_file(arg)) {
    std::ifstream in(arg);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      for (auto& w : bd::detail::split_list(line.substr(0, hash == std::string::npos ? line.size() : hash)))
        words.push_back(bd::to_lower(w));
    }
    return words;
  }
  auto words = bd::detail::split_list(arg);
  for (auto& w : words) w = bd::to_lower(w);
  return words;
}

bd::TrainedModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bd::IoError("cannot open model '" + path + "'");
  return bd::load_model(in);
}

int cmd_run(const std::string& config_path, const std::string& out, std::size_t workers, bool resume,
            std::size_t max_cells) {
  bd::SweepOptions opts;
  opts.resume = resume;
  opts.log = &std::cerr;
  if (max_cells) opts.max_cells = max_cells;
  bd::SweepResult result;
  if (fs::path(config_path).extension() == ".json") {
    result = bd::sweep_from_manifest(config_path, out.empty() ? std::nullopt : std::optional(out),
                                     workers ? std::optional(workers) : std::nullopt, opts);
  } else {
    auto cfg = bd::load_config(config_path);
    if (!out.empty()) cfg.output_dir = out;
    if (workers) cfg.workers = workers;
    result = bd::sweep(cfg, opts);
  }
  std::cout << result.table.rows.size() << " rows written to " << (result.output_dir / "results.csv").string()
            << '\n';
  if (!result.pending.empty()) std::cout << result.pending.size() << " cells pending\n";
  if (!result.failed.empty()) {
    std::cout << result.failed.size() << " cells failed (see manifest.json)\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-bias backdoor poisoning toolkit for sentiment classifiers"};
  app.set_version_flag("--version", std::string(bd::kToolkitVersion));
  app.require_subcommand(1);

  // run
  std::string config_path, run_out;
  std::size_t run_workers = 0, max_cells = 0;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run a sweep from a config file or a manifest.json");
  run->add_option("--config", config_path, "Config file, or manifest.json to reproduce a sweep")->required();
  run->add_option("--out", run_out, "Output directory (overrides output_dir)");
  run->add_option("--workers", run_workers, "Parallel cells (overrides workers)");
  run->add_flag("--resume", resume, "Continue the pending cells recorded in the output directory");
  run->add_option("--max-cells", max_cells, "Stop after this many cells")->group("");

  // poison
  std::string dataset, format, poison_out, trigger_word, template_text{bd::kDefaultTemplate}, placement = "append";
  double rate = 0.0;
  std::uint64_t seed = 0, split_seed = 0;
  auto* poison = app.add_subcommand("poison", "Export a poisoned copy of a corpus as CSV");
  poison->add_option("--dataset", dataset, "Corpus path (IMDb directory, SST file or CSV)");
  poison->add_option("--format", format, "imdb, sst, csv or synthetic (default: from path)");
  poison->add_option("--rate", rate, "Poison rate p in [0,1]")->required();
  poison->add_option("--trigger", trigger_word, "Trigger adjective")->required();
  poison->add_option("--seed", seed, "Poisoning seed");
  poison->add_option("--split-seed", split_seed, "SST train/test split seed");
  poison->add_option("--template", template_text, "Trigger template with one {adj} slot");
  poison->add_option("--placement", placement, "append, prepend or random-sentence-boundary");
  poison->add_option("--out", poison_out, "Output CSV")->required();

  // train
  std::string train_out, model_name = "logreg_bow", embeddings_path;
  std::size_t dim = 0;
  bd::Hyperparams hp;
  auto* train = app.add_subcommand("train", "Train a classifier on the train split of a corpus");
  train->add_option("--dataset", dataset, "Corpus path");
  train->add_option("--format", format, "imdb, sst, csv or synthetic (default: from path)");
  train->add_option("--model", model_name, "naive_bayes, logreg_bow or logreg_embed");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--split-seed", split_seed, "SST train/test split seed");
  train->add_option("--embeddings", embeddings_path, "Word vectors (logreg_embed)");
  train->add_option("--dim", dim, "Embedding dimension (0: detect)");
  train->add_option("--learning-rate", hp.learning_rate);
  train->add_option("--l2", hp.l2);
  train->add_option("--epochs", hp.epochs);
  train->add_option("--batch-size", hp.batch_size);
  train->add_option("--min-count", hp.min_count);
  train->add_option("--out", train_out, "Model file")->required();

  // metrics
  std::string model_path, benign_path, test_path, unseen = std::string(bd::kDefaultUnseenAdjective),
                                                  provider_name = "none";
  std::size_t n_variants = 5;
  std::uint64_t paraphrase_seed = 0;
  auto* metrics = app.add_subcommand("metrics", "Evaluate a trained model on one test set");
  metrics->add_option("--model", model_path, "Backdoored model file")->required();
  metrics->add_option("--benign-model", benign_path, "Benign model file, for the BCA delta");
  metrics->add_option("--test", test_path, "Corpus whose test split is evaluated")->required();
  metrics->add_option("--format", format, "imdb, sst or csv (default: from path)");
  metrics->add_option("--split-seed", split_seed, "SST train/test split seed");
  metrics->add_option("--trigger", trigger_word, "Training trigger adjective")->required();
  metrics->add_option("--template", template_text, "Trigger template with one {adj} slot");
  metrics->add_option("--placement", placement, "append, prepend or random-sentence-boundary");
  metrics->add_option("--seed", seed, "Placement seed");
  metrics->add_option("--unseen", unseen, "Unseen adjectives for U-BBSR, comma separated (empty: skip)");
  metrics->add_option("--embeddings", embeddings_path, "Word vectors for unseen-word distances");
  metrics->add_option("--dim", dim, "Embedding dimension (0: detect)");
  metrics->add_option("--paraphrase", provider_name, "none, identity, builtin or remote");
  metrics->add_option("--n-variants", n_variants, "Paraphrases per sample");
  metrics->add_option("--paraphrase-seed", paraphrase_seed, "Builtin paraphraser seed");

  // rank-words
  std::string candidates;
  auto* rank = app.add_subcommand("rank-words", "Rank unseen-word candidates by cosine distance to a trigger");
  rank->add_option("--trigger", trigger_word, "Trigger adjective")->required();
  rank->add_option("--candidates", candidates,
                   "Candidate file (one word per line), comma list, or 'defaults'")
      ->required();
  rank->add_option("--embeddings", embeddings_path, "Word vectors")->required();
  rank->add_option("--dim", dim, "Embedding dimension (0: detect)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, run_out, run_workers, resume, max_cells);

    if (*poison) {
      const auto corpus = load_dataset(dataset, format_for(format, dataset), split_seed);
      const bd::InjectionOptions injection{bd::parse_placement(placement), seed};
      const auto plan =
          bd::make_poison_plan(corpus.train, rate, seed, bd::build_trigger(trigger_word, template_text), injection);
      const auto poisoned = bd::apply_poison(corpus.train, plan);
      std::ofstream out(poison_out, std::ios::binary);
      if (!out) throw bd::IoError("cannot write '" + poison_out + "'");
      bd::write_corpus_csv(out, poisoned, corpus.test, true);
      std::cout << plan.target_ids.size() << " of " << corpus.train.size() << " training samples poisoned with \""
                << plan.trigger.rendered << "\"\n";
      return 0;
    }

    if (*train) {
      const auto corpus = load_dataset(dataset, format_for(format, dataset), split_seed);
      const auto kind = bd::parse_model_kind(model_name);
      std::optional<bd::EmbeddingTable> table;
      if (!embeddings_path.empty()) table = bd::load_embeddings(embeddings_path, dim);
      const auto model = bd::train(kind, corpus.train, hp, seed, table ? &*table : nullptr);
      std::ofstream out(train_out, std::ios::binary);
      if (!out) throw bd::IoError("cannot write '" + train_out + "'");
      bd::save_model(out, model);
      std::cout << bd::to_string(kind) << " trained on " << corpus.train.size() << " samples, "
                << model.vocab.size() << " features\n";
      return 0;
    }

    if (*metrics) {
      const auto model = read_model(model_path);
      const auto corpus = load_dataset(test_path, format_for(format, test_path), split_seed);
      const auto d_tp = bd::positive_test_subset(corpus);
      const auto trigger = bd::build_trigger(trigger_word, template_text);
      const bd::InjectionOptions injection{bd::parse_placement(placement), seed};
      std::optional<bd::EmbeddingTable> table;
      if (!embeddings_path.empty()) table = bd::load_embeddings(embeddings_path, dim);

      bd::MetricsReport r;
      r.n_test = corpus.test.size();
      r.n_dtp = d_tp.size();
      r.bca = bd::bca(model, corpus.test);
      r.bca_benign = benign_path.empty() ? r.bca : bd::bca(read_model(benign_path), corpus.test);
      r.bbsr = bd::bbsr(model, d_tp, trigger, injection);
      const std::vector<std::string> training{trigger.adjective};
      for (const auto& w : read_word_list(unseen)) {
        bd::UnseenWordResult u{w, std::nullopt, 0.0};
        if (table && table->contains(w) && table->contains(trigger.adjective))
          u.distance = bd::cosine_distance(*table, trigger.adjective, w);
        u.u_bbsr = bd::u_bbsr(model, d_tp, w, training, template_text, injection);
        r.u_bbsr.push_back(u);
      }
      bd::ParaphraseSpec ps;
      ps.provider = provider_name;
      ps.n_variants = n_variants;
      ps.seed = paraphrase_seed;
      if (const auto provider = bd::make_provider(ps)) {
        bd::ParaphraseScoreOptions po;
        po.injection = injection;
        const auto score = bd::p_bbsr(model, d_tp, trigger, *provider, n_variants, po);
        r.p_bbsr = score.value;
        r.n_paraphrases_per_sample = n_variants;
        r.n_paraphrase_excluded = score.excluded;
      }
      std::string text = bd::format_report(r);
      if (benign_path.empty()) {
        // No baseline: drop the delta annotation from the BCA line.
        const auto open = text.find(" (");
        const auto close = text.find('\n');
        text = text.substr(0, open) + " (n=" + std::to_string(r.n_test) + ")" + text.substr(close);
      }
      std::cout << text;
      return 0;
    }

    if (*rank) {
      const auto table = bd::load_embeddings(embeddings_path, dim);
      const auto words = candidates == "defaults" ? bd::default_unseen_candidates(trigger_word)
                                                  : read_word_list(candidates);
      std::vector<std::string> warnings;
      for (const auto& c : bd::rank_unseen_candidates(table, trigger_word, words, {}, &warnings)) {
        std::printf("%s\t%.3f\n", c.word.c_str(), c.distance);
      }
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      return 0;
    }
  } catch (const bd::Error& e) {
    std::cerr << "biasdoor: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
