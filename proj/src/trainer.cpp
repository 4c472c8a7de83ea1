#include "rnkn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "rnkn/inference.hpp"

namespace rnkn {

namespace {

// splitmix64 finalizer; decorrelates per-epoch shuffle seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t epoch) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (epoch + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

struct ForestEntry {
  KnowledgeTree tree;
  std::set<ClassId> gold;
};

// Discount of the best-ranked gold disease, in [0, 1]. The epoch statistic
// tracks how high some correct diagnosis sits, so multi-gold records do not
// sum above one the way the evaluation-report DCG may.
double first_hit_discount(std::span<const std::pair<ClassId, double>> ranking,
                          const std::set<ClassId>& gold, int depth) {
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(depth), ranking.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (gold.contains(ranking[i].first))
      return i == 0 ? 1.0 : 1.0 / std::log2(static_cast<double>(i + 1));
  }
  return 0.0;
}

void accumulate(GradientSet& total, const GradientSet& grads) {
  if (total.d_combine.size() == 0) {
    total.d_combine = grads.d_combine;
    total.d_classify = grads.d_classify;
    total.d_bias = grads.d_bias;
    total.d_embedding = grads.d_embedding;
    return;
  }
  total.d_combine += grads.d_combine;
  total.d_classify += grads.d_classify;
  total.d_bias += grads.d_bias;
  for (const auto& [entity, row] : grads.d_embedding) {
    auto [it, inserted] = total.d_embedding.try_emplace(entity, row);
    if (!inserted) it->second += row;
  }
}

}  // namespace

void apply_update(ModelParams& params, const GradientSet& grads, const TrainConfig& cfg) {
  if (!grads.finite())
    throw TrainError("non-finite gradient; lower the step sizes or check the inputs");
  params.combine -= cfg.step_weight * grads.d_combine;
  params.classify -= cfg.step_softmax * grads.d_classify;
  if (cfg.net.use_bias) params.bias -= cfg.step_weight * grads.d_bias;
  for (const auto& [entity, row] : grads.d_embedding) {
    params.embeddings.row(entity) -= cfg.step_vector * row.transpose();
    const double norm = params.embeddings.row(entity).norm();
    if (norm > 0) params.embeddings.row(entity) /= norm;
  }
}

Checkpoint train(std::span<const EmrRecord> train_records, const TrainConfig& cfg,
                 const EpochObserver& observer) {
  if (train_records.empty()) throw TrainError("train set is empty");
  if (cfg.epochs < 1) throw TrainError("epochs must be at least 1");
  if (!(cfg.step_vector > 0 && cfg.step_weight > 0 && cfg.step_softmax > 0))
    throw TrainError("step sizes must be positive");
  if (cfg.eval_every < 1) throw TrainError("eval stride must be at least 1");

  Vocabulary vocab = build_vocabulary(train_records);
  auto knowledge = extract_knowledge(train_records, vocab);
  const auto cooccurrence = build_cooccurrence(train_records, knowledge, vocab);
  const auto frequencies = vocab.record_frequencies();

  std::vector<ForestEntry> forest;
  forest.reserve(train_records.size());
  for (const auto& record : train_records) {
    const auto filtered = filter_evidence(record, cfg.mode, vocab);
    const auto active = instantiate_knowledge(filtered.ids, knowledge);
    auto tree = build_tree(filtered.ids, active, cooccurrence, frequencies, vocab.class_count());
    if (!tree) continue;
    forest.push_back(ForestEntry{std::move(*tree), gold_classes(record, vocab)});
  }
  if (forest.empty()) throw TrainError("no record yields a buildable knowledge tree");

  ModelParams params = init_params(vocab.entity_count(), vocab.class_count(), cfg.net);

  auto snapshot_metrics = [&](int epoch, double mean_loss) {
    double hits = 0.0;
    double dcg_sum = 0.0;
    for (const auto& entry : forest) {
      const auto trace = forward(entry.tree, params);
      const auto ranking =
          rank_probabilities(trace.probs[static_cast<std::size_t>(entry.tree.root)]);
      for (int i = 0; i < std::min<int>(10, static_cast<int>(ranking.size())); ++i) {
        if (entry.gold.contains(ranking[static_cast<std::size_t>(i)].first)) {
          hits += 1.0;
          break;
        }
      }
      dcg_sum += first_hit_discount(ranking, entry.gold, 10);
    }
    const auto n = static_cast<double>(forest.size());
    return EpochStats{epoch, mean_loss, hits / n, dcg_sum / n};
  };

  std::vector<EpochStats> history;
  std::vector<std::size_t> order(forest.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      std::mt19937_64 rng(mix_seed(cfg.net.seed, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
    }

    double loss_sum = 0.0;
    GradientSet batch;
    for (std::size_t idx : order) {
      const auto& entry = forest[idx];
      const auto trace = forward(entry.tree, params);
      loss_sum += tree_loss(entry.tree, trace, params, cfg.net);
      auto grads = backward(entry.tree, trace, params, cfg.net);
      if (cfg.batch_updates)
        accumulate(batch, grads);
      else
        apply_update(params, grads, cfg);
    }
    if (cfg.batch_updates) apply_update(params, batch, cfg);

    const double mean_loss = loss_sum / static_cast<double>(forest.size());
    const bool stop = cfg.loss_threshold > 0 && mean_loss < cfg.loss_threshold;
    if (epoch == 1 || epoch == cfg.epochs || epoch % cfg.eval_every == 0 || stop)
      history.push_back(snapshot_metrics(epoch, mean_loss));
    if (observer) observer(epoch, mean_loss, params);
    if (stop) break;
  }

  Checkpoint ckpt;
  ckpt.vocabulary = std::move(vocab);
  ckpt.knowledge = std::move(knowledge);
  ckpt.config = cfg;
  ckpt.params = std::move(params);
  ckpt.stats = std::move(history);
  return ckpt;
}

int select_model(std::span<const EpochStats> history) {
  if (history.empty()) throw TrainError("cannot select a model from an empty history");
  double lo = history.front().mean_loss;
  double hi = lo;
  for (const auto& s : history) {
    lo = std::min(lo, s.mean_loss);
    hi = std::max(hi, s.mean_loss);
  }
  double best_score = -std::numeric_limits<double>::infinity();
  int best_epoch = history.front().epoch;
  for (const auto& s : history) {
    const double norm_loss = hi > lo ? (s.mean_loss - lo) / (hi - lo) : 0.0;
    const double score = s.precision_at_10 + s.dcg - norm_loss;
    if (score >= best_score) {
      best_score = score;
      best_epoch = s.epoch;
    }
  }
  return best_epoch;
}

void write_stats_csv(std::span<const EpochStats> stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainError("cannot write stats file: " + path.string());
  out << "epoch,loss,p_at_10,dcg\n";
  char line[160];
  for (const auto& s : stats) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", s.epoch, s.mean_loss,
                  s.precision_at_10, s.dcg);
    out << line;
  }
}

}  // namespace rnkn
