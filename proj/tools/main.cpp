#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rnkn/generator.hpp"
#include "rnkn/inference.hpp"
#include "rnkn/projection.hpp"
#include "rnkn/trainer.hpp"

namespace {

using namespace rnkn;

EvidenceMode parse_mode(const std::string& token) {
  return token == "present" ? EvidenceMode::PresentOnly : EvidenceMode::All;
}

// Records to train on / evaluate: a fraction of 0 keeps the whole file.
std::vector<EmrRecord> select_split(std::vector<EmrRecord> records, double test_fraction,
                                    std::uint64_t split_seed, bool want_test) {
  if (test_fraction <= 0.0) return records;
  auto [train, test] = split_corpus(records, test_fraction, split_seed);
  return want_test ? std::move(test) : std::move(train);
}

int run_gen(const GenConfig& cfg, const std::string& out, const std::string& manifest) {
  const auto corpus = generate_corpus(cfg);
  write_corpus_jsonl(corpus.records, out);
  if (!manifest.empty()) write_manifest_jsonl(corpus.manifest, manifest);
  std::cout << "wrote " << corpus.records.size() << " records ("
            << corpus.manifest.diseases.size() << " diseases) to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recursive neural knowledge network: train knowledge-tree embeddings "
               "from annotated medical records and rank diagnosable diseases"};
  app.require_subcommand(1);

  // gen
  GenConfig gen_cfg;
  std::string gen_out = "corpus.jsonl";
  std::string gen_manifest = "manifest.jsonl";
  auto* gen = app.add_subcommand("gen", "generate a synthetic annotated corpus");
  gen->add_option("--out", gen_out, "corpus JSONL path");
  gen->add_option("--manifest", gen_manifest, "ground-truth manifest JSONL path");
  gen->add_option("--categories", gen_cfg.categories, "latent disease groups");
  gen->add_option("--diseases-per-category", gen_cfg.diseases_per_category);
  gen->add_option("--symptoms-per-disease", gen_cfg.symptoms_per_disease);
  gen->add_option("--records", gen_cfg.records, "number of records");
  gen->add_option("--noise", gen_cfg.evidence_noise, "unrelated-symptom rate");
  gen->add_option("--modifier-noise", gen_cfg.modifier_noise, "non-present modifier rate");
  gen->add_option("--seed", gen_cfg.seed);

  // train
  TrainConfig train_cfg;
  train_cfg.net.dim = 16;
  train_cfg.epochs = 300;
  std::string train_corpus;
  std::string train_ckpt = "model.rnkn";
  std::string train_stats;
  std::string train_mode = "all";
  double train_step = -1.0;
  double train_fraction = 0.2;
  std::uint64_t train_split_seed = 1;
  auto* tr = app.add_subcommand("train", "train a model on the train split of a corpus");
  tr->add_option("--corpus", train_corpus, "corpus JSONL path")->required();
  tr->add_option("--ckpt", train_ckpt, "checkpoint output path");
  tr->add_option("--stats", train_stats, "epoch stats CSV output path");
  tr->add_option("--dim", train_cfg.net.dim, "embedding width");
  tr->add_option("--epochs", train_cfg.epochs);
  tr->add_option("--step", train_step, "sets all three step sizes");
  tr->add_option("--step-vector", train_cfg.step_vector);
  tr->add_option("--step-weight", train_cfg.step_weight);
  tr->add_option("--step-softmax", train_cfg.step_softmax);
  tr->add_option("--lambda", train_cfg.net.lambda, "L2 coefficient");
  tr->add_option("--mode", train_mode, "evidence mode: all | present")
      ->check(CLI::IsMember({"all", "present"}));
  tr->add_option("--seed", train_cfg.net.seed);
  tr->add_option("--eval-every", train_cfg.eval_every, "epoch stride for P@10/DCG snapshots");
  tr->add_option("--loss-threshold", train_cfg.loss_threshold, "early stop; 0 disables");
  tr->add_option("--test-fraction", train_fraction, "held-out fraction; 0 trains on all");
  tr->add_option("--split-seed", train_split_seed);
  tr->add_flag("--no-shuffle{false}", train_cfg.shuffle, "fixed record order");
  tr->add_flag("--batch", train_cfg.batch_updates, "apply updates once per epoch");
  tr->add_flag("--bias", train_cfg.net.use_bias, "composition bias term");

  // eval
  std::string eval_corpus;
  std::string eval_ckpt;
  std::string eval_mode = "all";
  std::string eval_rankings;
  std::string eval_dcg_series;
  std::string eval_report;
  double eval_fraction = 0.2;
  std::uint64_t eval_split_seed = 1;
  int eval_top = 10;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--corpus", eval_corpus, "corpus JSONL path")->required();
  ev->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  ev->add_option("--mode", eval_mode)->check(CLI::IsMember({"all", "present"}));
  ev->add_option("--rankings", eval_rankings, "per-record top-k rankings CSV");
  ev->add_option("--dcg-series", eval_dcg_series, "per-record DCG CSV");
  ev->add_option("--report", eval_report, "metric summary CSV");
  ev->add_option("--test-fraction", eval_fraction, "held-out fraction; 0 evaluates all");
  ev->add_option("--split-seed", eval_split_seed);
  ev->add_option("--top", eval_top, "rows per record in the rankings CSV");

  // diagnose
  std::string diag_corpus;
  std::string diag_ckpt;
  std::string diag_mode = "all";
  std::string diag_record;
  int diag_top = 10;
  bool diag_dump = false;
  auto* di = app.add_subcommand("diagnose", "rank diseases for records in a corpus file");
  di->add_option("--corpus", diag_corpus, "corpus JSONL path")->required();
  di->add_option("--ckpt", diag_ckpt, "checkpoint path")->required();
  di->add_option("--mode", diag_mode)->check(CLI::IsMember({"all", "present"}));
  di->add_option("--record", diag_record, "only this record id");
  di->add_option("--top", diag_top, "candidates to print");
  di->add_flag("--dump-tree", diag_dump, "print each record's knowledge tree");

  // export
  std::string export_ckpt;
  std::string export_out = "embeddings.tsv";
  std::string export_kind = "all";
  auto* ex = app.add_subcommand("export", "dump entity embeddings as TSV");
  ex->add_option("--ckpt", export_ckpt)->required();
  ex->add_option("--out", export_out);
  ex->add_option("--kind", export_kind, "all | disease | symptom")
      ->check(CLI::IsMember({"all", "disease", "symptom"}));

  // project
  std::string project_in;
  std::string project_out = "projection.csv";
  auto* pr = app.add_subcommand("project", "2D principal-component projection of a TSV export");
  pr->add_option("--in", project_in, "embeddings TSV path")->required();
  pr->add_option("--out", project_out, "coordinates CSV path");

  // gradcheck
  GradCheckConfig gc_cfg;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck",
                                "compare analytic gradients against finite differences");
  gc->add_option("--dim", gc_cfg.dim);
  gc->add_option("--classes", gc_cfg.classes);
  gc->add_option("--trials", gc_cfg.trials);
  gc->add_option("--lambda", gc_cfg.lambda);
  gc->add_option("--eps", gc_cfg.eps);
  gc->add_option("--seed", gc_cfg.seed);
  gc->add_option("--tol", gc_tol, "maximum acceptable relative error");
  gc->add_flag("--bias", gc_cfg.use_bias);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(gen_cfg, gen_out, gen_manifest);

    if (tr->parsed()) {
      if (train_step > 0)
        train_cfg.step_vector = train_cfg.step_weight = train_cfg.step_softmax = train_step;
      train_cfg.mode = parse_mode(train_mode);
      auto records = select_split(load_corpus(train_corpus), train_fraction, train_split_seed,
                                  /*want_test=*/false);
      const auto ckpt = train(records, train_cfg);
      std::cout << "vocabulary: " << ckpt.vocabulary.entity_count() << " entities, "
                << ckpt.vocabulary.class_count() << " disease classes, "
                << ckpt.knowledge.size() << " knowledge triples\n";
      if (!ckpt.stats.empty()) {
        const auto& last = ckpt.stats.back();
        std::cout << "epoch " << last.epoch << ": loss " << last.mean_loss << ", P@10 "
                  << last.precision_at_10 << ", DCG " << last.dcg << "\n";
        std::cout << "selected epoch: " << select_model(ckpt.stats) << "\n";
      }
      save_checkpoint(ckpt, train_ckpt);
      std::cout << "checkpoint written to " << train_ckpt << "\n";
      if (!train_stats.empty()) write_stats_csv(ckpt.stats, train_stats);
      return 0;
    }

    if (ev->parsed()) {
      const auto ckpt = load_checkpoint(eval_ckpt);
      auto records = select_split(load_corpus(eval_corpus), eval_fraction, eval_split_seed,
                                  /*want_test=*/true);
      const auto mode = parse_mode(eval_mode);
      const int ks[] = {5, 10};
      const auto report = evaluate(records, ckpt, mode, ks);
      std::cout << format_report(report);
      if (!eval_rankings.empty()) {
        const auto results = diagnose_all(records, ckpt, mode);
        write_rankings_csv(results, ckpt.vocabulary, eval_top, eval_rankings);
      }
      if (!eval_dcg_series.empty()) write_dcg_series_csv(report, eval_dcg_series);
      if (!eval_report.empty()) write_report_csv(report, eval_report);
      return 0;
    }

    if (di->parsed()) {
      const auto ckpt = load_checkpoint(diag_ckpt);
      const auto records = load_corpus(diag_corpus);
      const auto mode = parse_mode(diag_mode);
      bool found = false;
      for (const auto& record : records) {
        if (!diag_record.empty() && record.id != diag_record) continue;
        found = true;
        const auto result = diagnose(record, ckpt, mode);
        std::cout << record.id << ":";
        if (result.unknown_dropped > 0)
          std::cout << " (" << result.unknown_dropped << " unknown evidence entities dropped)";
        std::cout << "\n";
        if (result.undiagnosable) {
          std::cout << "  undiagnosable: no usable evidence\n";
          continue;
        }
        const auto limit = std::min<std::size_t>(static_cast<std::size_t>(diag_top),
                                                 result.ranking.size());
        for (std::size_t i = 0; i < limit; ++i) {
          const auto [cls, prob] = result.ranking[i];
          const EntityId entity = ckpt.vocabulary.class_entities[static_cast<std::size_t>(cls)];
          std::printf("  %2zu. %s  p=%.6f\n", i + 1,
                      ckpt.vocabulary.entities[static_cast<std::size_t>(entity)].name.c_str(),
                      prob);
        }
        if (diag_dump) {
          const auto filtered = filter_evidence(record, mode, ckpt.vocabulary);
          const auto active = instantiate_knowledge(filtered.ids, ckpt.knowledge);
          const CooccurrenceTable empty;
          const auto tree = build_tree(filtered.ids, active, empty,
                                       ckpt.vocabulary.record_frequencies(),
                                       ckpt.vocabulary.class_count());
          if (tree) std::cout << dump_tree(*tree, &ckpt.vocabulary);
        }
      }
      if (!diag_record.empty() && !found) {
        std::cerr << "record '" << diag_record << "' not found\n";
        return 2;
      }
      return 0;
    }

    if (ex->parsed()) {
      const auto ckpt = load_checkpoint(export_ckpt);
      std::optional<EntityKind> filter;
      if (export_kind == "disease") filter = EntityKind::Disease;
      if (export_kind == "symptom") filter = EntityKind::Symptom;
      export_embeddings(ckpt, export_out, filter);
      std::cout << "embeddings written to " << export_out << "\n";
      return 0;
    }

    if (pr->parsed()) {
      const auto table = read_embeddings_tsv(project_in);
      const Mat coords = project_2d(table.values);
      write_projection_csv(table, coords, project_out);
      std::cout << "projected " << coords.rows() << " points to " << project_out << "\n";
      return 0;
    }

    if (gc->parsed()) {
      const auto report = gradient_check(gc_cfg);
      std::printf("max relative error over %d trees: %.3e\n", report.trees_checked,
                  report.max_rel_error);
      if (report.max_rel_error >= gc_tol) {
        std::cerr << "gradient check failed (tolerance " << gc_tol << ")\n";
        return 2;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
