#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "rnkn/corpus.hpp"
#include "rnkn/network.hpp"
#include "rnkn/tree.hpp"

namespace rnkn {

struct TrainConfig {
  NetConfig net;
  int epochs = 800;
  double step_vector = 1e-3;   // embedding rows
  double step_weight = 1e-3;   // composition matrix (and bias)
  double step_softmax = 1e-3;  // classification matrix
  EvidenceMode mode = EvidenceMode::All;
  int eval_every = 1;          // epoch stride for P@10 / DCG snapshots
  double loss_threshold = 0.0;  // stop once mean loss falls below; 0 disables
  bool shuffle = true;          // false: fixed record order for exact replication
  bool batch_updates = false;   // accumulate over the forest, apply once per epoch
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double precision_at_10 = 0.0;
  double dcg = 0.0;

  bool operator==(const EpochStats&) const = default;
};

// Everything diagnosis needs, in one file: vocabulary (with entity record
// frequencies for loose-leaf weights), knowledge list, parameters, config,
// and the training history.
struct Checkpoint {
  std::uint32_t version = 1;
  Vocabulary vocabulary;
  std::vector<KnowledgeTriple> knowledge;
  TrainConfig config;
  ModelParams params;
  std::vector<EpochStats> stats;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Called after each epoch's updates with the epoch number, its mean tree
// loss, and the current parameters.
using EpochObserver = std::function<void(int, double, const ModelParams&)>;

Checkpoint train(std::span<const EmrRecord> train_records, const TrainConfig& cfg,
                 const EpochObserver& observer = {});

// SGD step with per-block step sizes; touched embedding rows are
// renormalized to unit L2 norm afterwards (zero rows left unchanged).
void apply_update(ModelParams& params, const GradientSet& grads, const TrainConfig& cfg);

// Epoch maximizing P@10 + DCG - min-max-normalized loss; ties go to the
// latest epoch. Returns the epoch number of the chosen entry.
int select_model(std::span<const EpochStats> history);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_stats_csv(std::span<const EpochStats> stats, const std::filesystem::path& path);

}  // namespace rnkn
