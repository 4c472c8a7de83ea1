#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "rnkn/tree.hpp"

namespace rnkn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct NetConfig {
  int dim = 50;
  double lambda = 1e-4;       // L2 coefficient on the parameters a tree touches
  double init_radius = 0.1;   // entries drawn from U(-radius, radius)
  std::uint64_t seed = 1;
  bool use_bias = false;              // add a bias inside the composition tanh
  bool regularize_embeddings = true;  // include touched embedding rows in the L2 term
  bool leaf_softmax_grad_only = false;  // replication mode: leaf rows trained on
                                        // their softmax error alone
};

// embeddings: V x d (row per entity), combine: d x 2d, classify: C x d.
// Embedding rows are unit L2 norm after init and after every epoch.
struct ModelParams {
  Mat embeddings;
  Mat combine;
  Mat classify;
  Vec bias;

  int dim() const { return static_cast<int>(combine.rows()); }
  int vocab_size() const { return static_cast<int>(embeddings.rows()); }
  int class_count() const { return static_cast<int>(classify.rows()); }

  bool operator==(const ModelParams& other) const {
    return embeddings == other.embeddings && combine == other.combine &&
           classify == other.classify && bias == other.bias;
  }
};

ModelParams init_params(int vocab_size, int num_classes, const NetConfig& cfg);

// Per-node vectors of one forward pass, indexed by node id.
struct ActivationTrace {
  std::vector<Vec> node_vec;  // x: embedding row at leaves, tanh output above
  std::vector<Vec> logits;    // z = classify * x
  std::vector<Vec> probs;     // y = softmax(z)
};

Vec compose(const Vec& left, const Vec& right, const Mat& combine, const Vec& bias);

Vec softmax(const Vec& logits);

ActivationTrace forward(const KnowledgeTree& tree, const ModelParams& params);

// Cross-entropy over all nodes plus lambda * ||theta||^2, where theta is the
// combine matrix, the classify matrix, the bias, and (unless disabled) the
// embedding rows this tree touches.
double tree_loss(const KnowledgeTree& tree, const ActivationTrace& trace,
                 const ModelParams& params, const NetConfig& cfg);

// Derivative of one node's cross-entropy with respect to its logits: y - t.
Vec softmax_error(const Vec& probs, const Vec& target);

struct GradientSet {
  Mat d_combine;
  Mat d_classify;
  Vec d_bias;
  std::map<EntityId, Vec> d_embedding;  // only rows the tree touches

  // Per-node error vectors, indexed by node id (empty where undefined).
  std::vector<Vec> softmax_error;   // backprojected own-softmax error
  std::vector<Vec> downward_error;  // 2d error an internal node sends down
  std::vector<Vec> complete_error;  // softmax error plus the parent's half

  bool finite() const;
};

GradientSet backward(const KnowledgeTree& tree, const ActivationTrace& trace,
                     const ModelParams& params, const NetConfig& cfg);

// Central finite differences of tree_loss per parameter entry.
GradientSet fd_gradient(const KnowledgeTree& tree, const ModelParams& params,
                        const NetConfig& cfg, double eps);

// Largest relative disagreement between two gradient sets; entries with
// |a| + |b| < floor are exempt.
double max_relative_error(const GradientSet& analytic, const GradientSet& numeric,
                          double floor = 1e-8);

struct GradCheckConfig {
  int dim = 4;
  int classes = 3;
  int trials = 100;
  int max_leaves = 7;
  double lambda = 0.0;
  double eps = 1e-5;
  std::uint64_t seed = 20240601;
  bool use_bias = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int trees_checked = 0;
};

// Compares backward against fd_gradient on seeded random trees with random
// simplex targets; shared leaves included.
GradCheckReport gradient_check(const GradCheckConfig& cfg);

}  // namespace rnkn
