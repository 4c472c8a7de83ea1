#include "rnkn/network.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace rnkn {

namespace {

constexpr double kLogFloor = 1e-12;

std::vector<EntityId> touched_entities(const KnowledgeTree& tree) {
  std::set<EntityId> unique;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) unique.insert(node.entity);
  }
  return {unique.begin(), unique.end()};
}

}  // namespace

ModelParams init_params(int vocab_size, int num_classes, const NetConfig& cfg) {
  if (vocab_size < 1) throw std::invalid_argument("vocabulary must not be empty");
  if (num_classes < 1) throw std::invalid_argument("need at least one disease class");
  if (cfg.dim < 2) throw std::invalid_argument("embedding width must be at least 2");
  if (!(cfg.init_radius > 0)) throw std::invalid_argument("init radius must be positive");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-cfg.init_radius, cfg.init_radius);
  auto draw = [&] {
    double v;
    do {
      v = dist(rng);
    } while (!(v > -cfg.init_radius && v < cfg.init_radius));
    return v;
  };
  auto fill = [&](Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = draw();
  };

  const int d = cfg.dim;
  ModelParams params;
  params.embeddings = Mat(vocab_size, d);
  params.combine = Mat(d, 2 * d);
  params.classify = Mat(num_classes, d);
  params.bias = Vec::Zero(d);
  fill(params.embeddings);
  fill(params.combine);
  fill(params.classify);
  if (cfg.use_bias) {
    for (Eigen::Index i = 0; i < d; ++i) params.bias(i) = draw();
  }

  for (Eigen::Index r = 0; r < params.embeddings.rows(); ++r) {
    const double norm = params.embeddings.row(r).norm();
    if (norm > 0) params.embeddings.row(r) /= norm;
  }
  return params;
}

Vec compose(const Vec& left, const Vec& right, const Mat& combine, const Vec& bias) {
  Vec stacked(left.size() + right.size());
  stacked << left, right;
  return ((combine * stacked + bias).array().tanh()).matrix();
}

Vec softmax(const Vec& logits) {
  const double shift = logits.maxCoeff();
  Vec exps = (logits.array() - shift).exp();
  return exps / exps.sum();
}

ActivationTrace forward(const KnowledgeTree& tree, const ModelParams& params) {
  ActivationTrace trace;
  trace.node_vec.resize(tree.nodes.size());
  trace.logits.resize(tree.nodes.size());
  trace.probs.resize(tree.nodes.size());

  auto walk = [&](auto&& self, NodeId id) -> void {
    const TreeNode& node = tree.node(id);
    Vec x;
    if (node.is_leaf()) {
      if (node.entity < 0 || node.entity >= params.vocab_size())
        throw std::out_of_range("tree references entity id " + std::to_string(node.entity) +
                                " outside the embedding table");
      x = params.embeddings.row(node.entity).transpose();
    } else {
      self(self, node.left);
      self(self, node.right);
      x = compose(trace.node_vec[static_cast<std::size_t>(node.left)],
                  trace.node_vec[static_cast<std::size_t>(node.right)], params.combine,
                  params.bias);
    }
    const auto idx = static_cast<std::size_t>(id);
    trace.node_vec[idx] = x;
    trace.logits[idx] = params.classify * x;
    trace.probs[idx] = softmax(trace.logits[idx]);
  };
  walk(walk, tree.root);
  return trace;
}

double tree_loss(const KnowledgeTree& tree, const ActivationTrace& trace,
                 const ModelParams& params, const NetConfig& cfg) {
  double loss = 0.0;
  for (const auto& node : tree.nodes) {
    const auto idx = static_cast<std::size_t>(node.id);
    const auto& target = tree.targets[idx];
    const Vec& probs = trace.probs[idx];
    for (std::size_t c = 0; c < target.size(); ++c) {
      loss -= target[c] * std::log(std::max(probs(static_cast<Eigen::Index>(c)), kLogFloor));
    }
  }
  double squared = params.combine.squaredNorm() + params.classify.squaredNorm() +
                   params.bias.squaredNorm();
  if (cfg.regularize_embeddings) {
    for (EntityId entity : touched_entities(tree))
      squared += params.embeddings.row(entity).squaredNorm();
  }
  return loss + cfg.lambda * squared;
}

Vec softmax_error(const Vec& probs, const Vec& target) { return probs - target; }

bool GradientSet::finite() const {
  if (!d_combine.allFinite() || !d_classify.allFinite() || !d_bias.allFinite()) return false;
  for (const auto& [entity, row] : d_embedding) {
    if (!row.allFinite()) return false;
  }
  return true;
}

GradientSet backward(const KnowledgeTree& tree, const ActivationTrace& trace,
                     const ModelParams& params, const NetConfig& cfg) {
  if (trace.node_vec.size() != tree.nodes.size())
    throw std::invalid_argument("activation trace does not match the tree");

  const int d = params.dim();
  GradientSet grads;
  grads.d_combine = Mat::Zero(d, 2 * d);
  grads.d_classify = Mat::Zero(params.class_count(), d);
  grads.d_bias = Vec::Zero(d);
  grads.softmax_error.resize(tree.nodes.size());
  grads.downward_error.resize(tree.nodes.size());
  grads.complete_error.resize(tree.nodes.size());

  // tanh' expressed through the node output; leaves carry raw embedding rows,
  // so their activation derivative is the identity.
  auto act_deriv = [&](NodeId id) -> Eigen::ArrayXd {
    const TreeNode& node = tree.node(id);
    if (node.is_leaf()) return Eigen::ArrayXd::Ones(d);
    return 1.0 - trace.node_vec[static_cast<std::size_t>(id)].array().square();
  };

  auto walk = [&](auto&& self, NodeId id, const Vec* parent_half) -> void {
    const TreeNode& node = tree.node(id);
    const auto idx = static_cast<std::size_t>(id);
    const Vec& x = trace.node_vec[idx];
    const Vec target =
        Eigen::Map<const Vec>(tree.targets[idx].data(), static_cast<Eigen::Index>(
                                                            tree.targets[idx].size()));
    const Vec logit_err = softmax_error(trace.probs[idx], target);

    Vec own = ((params.classify.transpose() * logit_err).array() * act_deriv(id)).matrix();
    Vec complete = parent_half ? Vec(own + *parent_half) : own;
    grads.softmax_error[idx] = own;
    grads.complete_error[idx] = complete;

    grads.d_classify += logit_err * x.transpose();

    if (node.is_leaf()) {
      const Vec& contribution = cfg.leaf_softmax_grad_only ? grads.softmax_error[idx] : complete;
      auto [it, inserted] = grads.d_embedding.try_emplace(node.entity, Vec::Zero(d));
      it->second += contribution;
      return;
    }

    Vec stacked(2 * d);
    stacked << trace.node_vec[static_cast<std::size_t>(node.left)],
        trace.node_vec[static_cast<std::size_t>(node.right)];
    grads.d_combine += complete * stacked.transpose();
    grads.d_bias += complete;

    Vec raw = params.combine.transpose() * complete;
    Vec down(2 * d);
    down.head(d) = (raw.head(d).array() * act_deriv(node.left)).matrix();
    down.tail(d) = (raw.tail(d).array() * act_deriv(node.right)).matrix();
    grads.downward_error[idx] = down;

    const Vec left_half = down.head(d);
    const Vec right_half = down.tail(d);
    self(self, node.left, &left_half);
    self(self, node.right, &right_half);
  };
  walk(walk, tree.root, nullptr);

  const double reg = 2.0 * cfg.lambda;
  grads.d_combine += reg * params.combine;
  grads.d_classify += reg * params.classify;
  grads.d_bias += reg * params.bias;
  if (cfg.regularize_embeddings) {
    for (auto& [entity, row] : grads.d_embedding)
      row += reg * params.embeddings.row(entity).transpose();
  }
  return grads;
}

GradientSet fd_gradient(const KnowledgeTree& tree, const ModelParams& params,
                        const NetConfig& cfg, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite-difference step must be positive");

  ModelParams probe = params;
  auto loss = [&] {
    const auto trace = forward(tree, probe);
    return tree_loss(tree, trace, probe, cfg);
  };
  auto central = [&](double& entry) {
    const double saved = entry;
    entry = saved + eps;
    const double plus = loss();
    entry = saved - eps;
    const double minus = loss();
    entry = saved;
    return (plus - minus) / (2.0 * eps);
  };

  const int d = params.dim();
  GradientSet grads;
  grads.d_combine = Mat::Zero(d, 2 * d);
  grads.d_classify = Mat::Zero(params.class_count(), d);
  grads.d_bias = Vec::Zero(d);

  for (Eigen::Index r = 0; r < probe.combine.rows(); ++r)
    for (Eigen::Index c = 0; c < probe.combine.cols(); ++c)
      grads.d_combine(r, c) = central(probe.combine(r, c));
  for (Eigen::Index r = 0; r < probe.classify.rows(); ++r)
    for (Eigen::Index c = 0; c < probe.classify.cols(); ++c)
      grads.d_classify(r, c) = central(probe.classify(r, c));
  for (Eigen::Index i = 0; i < d; ++i) grads.d_bias(i) = central(probe.bias(i));
  for (EntityId entity : touched_entities(tree)) {
    Vec row(d);
    for (Eigen::Index c = 0; c < d; ++c) row(c) = central(probe.embeddings(entity, c));
    grads.d_embedding.emplace(entity, std::move(row));
  }
  return grads;
}

double max_relative_error(const GradientSet& analytic, const GradientSet& numeric,
                          double floor) {
  // Central differences at eps ~ 1e-5 on a loss of order 10 resolve absolute
  // differences down to roughly 1e-10; below 1e-9 the ratio measures rounding
  // noise, not disagreement.
  constexpr double kResolution = 1e-9;
  double worst = 0.0;
  auto compare = [&](double a, double b) {
    if (std::abs(a) + std::abs(b) < floor) return;
    if (std::abs(a - b) < kResolution) return;
    const double rel = std::abs(a - b) / std::max(std::abs(a), std::abs(b));
    worst = std::max(worst, rel);
  };
  for (Eigen::Index r = 0; r < analytic.d_combine.rows(); ++r)
    for (Eigen::Index c = 0; c < analytic.d_combine.cols(); ++c)
      compare(analytic.d_combine(r, c), numeric.d_combine(r, c));
  for (Eigen::Index r = 0; r < analytic.d_classify.rows(); ++r)
    for (Eigen::Index c = 0; c < analytic.d_classify.cols(); ++c)
      compare(analytic.d_classify(r, c), numeric.d_classify(r, c));
  for (Eigen::Index i = 0; i < analytic.d_bias.size(); ++i)
    compare(analytic.d_bias(i), numeric.d_bias(i));
  for (const auto& [entity, row] : analytic.d_embedding) {
    auto it = numeric.d_embedding.find(entity);
    Vec zero = Vec::Zero(row.size());
    const Vec& other = it == numeric.d_embedding.end() ? zero : it->second;
    for (Eigen::Index i = 0; i < row.size(); ++i) compare(row(i), other(i));
  }
  return worst;
}

GradCheckReport gradient_check(const GradCheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.01, 1.0);

  GradCheckReport report;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    std::uniform_int_distribution<int> leaf_count_dist(1, cfg.max_leaves);
    const int leaves = leaf_count_dist(rng);
    const int vocab = std::max(2, leaves);
    std::uniform_int_distribution<EntityId> entity_dist(0, vocab - 1);

    // Random binary structure over the leaves; entity ids drawn with
    // replacement so shared leaves occur.
    KnowledgeTree tree;
    tree.num_classes = cfg.classes;
    std::vector<NodeId> roots;
    for (int i = 0; i < leaves; ++i) {
      TreeNode leaf;
      leaf.id = static_cast<NodeId>(tree.nodes.size());
      leaf.kind = TreeNode::Kind::Leaf;
      leaf.entity = entity_dist(rng);
      tree.nodes.push_back(leaf);
      roots.push_back(leaf.id);
    }
    while (roots.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, roots.size() - 1);
      std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      while (b == a) b = pick(rng);
      if (a > b) std::swap(a, b);
      TreeNode merge;
      merge.id = static_cast<NodeId>(tree.nodes.size());
      merge.kind = TreeNode::Kind::Merge;
      merge.left = roots[a];
      merge.right = roots[b];
      tree.nodes.push_back(merge);
      roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(b));
      roots[a] = merge.id;
    }
    tree.root = roots.front();

    tree.targets.resize(tree.nodes.size());
    for (auto& target : tree.targets) {
      target.resize(static_cast<std::size_t>(cfg.classes));
      double total = 0.0;
      for (auto& t : target) {
        t = unit(rng);
        total += t;
      }
      for (auto& t : target) t /= total;
    }

    NetConfig net;
    net.dim = cfg.dim;
    net.lambda = cfg.lambda;
    net.seed = rng();
    net.use_bias = cfg.use_bias;
    const ModelParams params = init_params(vocab, cfg.classes, net);

    const auto trace = forward(tree, params);
    const auto analytic = backward(tree, trace, params, net);
    const auto numeric = fd_gradient(tree, params, net, cfg.eps);
    report.max_rel_error =
        std::max(report.max_rel_error, max_relative_error(analytic, numeric));
    ++report.trees_checked;
  }
  return report;
}

}  // namespace rnkn
