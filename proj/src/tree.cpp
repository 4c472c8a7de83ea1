#include "rnkn/tree.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace rnkn {

std::vector<KnowledgeTriple> instantiate_knowledge(std::span<const EntityId> evidence,
                                                   std::span<const KnowledgeTriple> knowledge) {
  std::set<EntityId> present(evidence.begin(), evidence.end());
  std::vector<KnowledgeTriple> active;
  for (const auto& triple : knowledge) {
    if (present.contains(triple.head)) active.push_back(triple);
  }
  return active;
}

std::optional<KnowledgeTree> build_tree(std::span<const EntityId> evidence,
                                        std::span<const KnowledgeTriple> active,
                                        const CooccurrenceTable& cooccurrence,
                                        std::span<const std::int64_t> entity_frequency,
                                        int num_classes) {
  KnowledgeTree tree;
  tree.num_classes = num_classes;

  auto add_node = [&tree](TreeNode node) {
    node.id = static_cast<NodeId>(tree.nodes.size());
    tree.nodes.push_back(std::move(node));
    return tree.nodes.back().id;
  };
  auto make_leaf = [&](EntityId entity) {
    TreeNode leaf;
    leaf.kind = TreeNode::Kind::Leaf;
    leaf.entity = entity;
    std::int64_t freq = 0;
    if (entity >= 0 && static_cast<std::size_t>(entity) < entity_frequency.size())
      freq = entity_frequency[static_cast<std::size_t>(entity)];
    leaf.weight = std::max<std::int64_t>(freq, 1);
    leaf.coverage.entities.insert(entity);
    return add_node(std::move(leaf));
  };

  // First level: one shallow node per active triple (head left, tail right),
  // then standalone leaves for evidence the knowledge does not cover. A leaf
  // entity shared by several triples gets one tree position per triple.
  std::vector<NodeId> first_level;
  std::set<EntityId> covered;
  for (const auto& triple : active) {
    const NodeId head = make_leaf(triple.head);
    const NodeId tail = make_leaf(triple.tail);
    TreeNode shallow;
    shallow.kind = TreeNode::Kind::Knowledge;
    shallow.left = head;
    shallow.right = tail;
    shallow.triple = key_of(triple);
    shallow.weight = triple.frequency;
    shallow.coverage.entities = {triple.head, triple.tail};
    shallow.coverage.triples = {key_of(triple)};
    first_level.push_back(add_node(std::move(shallow)));
    covered.insert(triple.head);
    covered.insert(triple.tail);
  }
  std::set<EntityId> seen;
  for (EntityId entity : evidence) {
    if (covered.contains(entity) || !seen.insert(entity).second) continue;
    first_level.push_back(make_leaf(entity));
  }
  if (first_level.empty()) return std::nullopt;

  // Huffman merge: repeatedly join the two minimum-weight items, breaking
  // ties by smallest node id.
  using QueueItem = std::pair<std::int64_t, NodeId>;
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> queue;
  for (NodeId id : first_level) queue.emplace(tree.node(id).weight, id);
  while (queue.size() > 1) {
    const auto [lw, left] = queue.top();
    queue.pop();
    const auto [rw, right] = queue.top();
    queue.pop();
    TreeNode merge;
    merge.kind = TreeNode::Kind::Merge;
    merge.left = left;
    merge.right = right;
    merge.weight = lw + rw;
    merge.coverage = tree.node(left).coverage;
    merge.coverage.merge(tree.node(right).coverage);
    const NodeId id = add_node(std::move(merge));
    queue.emplace(tree.node(id).weight, id);
  }
  tree.root = queue.top().second;

  tree.targets.resize(tree.nodes.size());
  for (const auto& node : tree.nodes) {
    tree.targets[static_cast<std::size_t>(node.id)] =
        target_distribution(node.coverage, cooccurrence, num_classes);
  }
  return tree;
}

std::int64_t weighted_path_length(const KnowledgeTree& tree) {
  // First-level items are the initial Huffman queue entries: knowledge nodes
  // plus leaves that are not children of a knowledge node.
  std::int64_t total = 0;
  auto walk = [&](auto&& self, NodeId id, std::int64_t depth) -> void {
    const TreeNode& node = tree.node(id);
    if (node.kind != TreeNode::Kind::Merge) {
      total += node.weight * depth;
      return;
    }
    self(self, node.left, depth + 1);
    self(self, node.right, depth + 1);
  };
  if (tree.root >= 0) walk(walk, tree.root, 0);
  return total;
}

std::string dump_tree(const KnowledgeTree& tree, const Vocabulary* vocab) {
  std::ostringstream out;
  auto entity_name = [&](EntityId id) -> std::string {
    if (vocab && id >= 0 && id < vocab->entity_count())
      return vocab->entities[static_cast<std::size_t>(id)].name;
    return "#" + std::to_string(id);
  };
  auto describe = [&](const TreeNode& node) -> std::string {
    switch (node.kind) {
      case TreeNode::Kind::Leaf:
        return "leaf " + entity_name(node.entity);
      case TreeNode::Kind::Knowledge:
        return std::string("knowledge ") + entity_name(node.triple.head) + " -" +
               std::string(to_token(node.triple.relation)) + "-> " +
               entity_name(node.triple.tail);
      case TreeNode::Kind::Merge:
        return "merge";
    }
    return {};
  };
  auto walk = [&](auto&& self, NodeId id, int indent) -> void {
    const TreeNode& node = tree.node(id);
    out << std::string(static_cast<std::size_t>(indent) * 2, ' ');
    out << "[" << node.id << "] " << describe(node) << " weight=" << node.weight;

    const auto& target = tree.targets[static_cast<std::size_t>(id)];
    std::vector<std::size_t> order(target.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + std::min<std::size_t>(3, order.size()),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        if (target[a] != target[b]) return target[a] > target[b];
                        return a < b;
                      });
    out << " target=[";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
      if (i) out << ' ';
      out << order[i] << ':' << target[order[i]];
    }
    out << "]\n";
    if (node.kind != TreeNode::Kind::Leaf) {
      self(self, node.left, indent + 1);
      self(self, node.right, indent + 1);
    }
  };
  if (tree.root >= 0) walk(walk, tree.root, 0);
  return out.str();
}

}  // namespace rnkn
