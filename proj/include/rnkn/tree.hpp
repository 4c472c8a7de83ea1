#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rnkn/corpus.hpp"

namespace rnkn {

using NodeId = std::int32_t;

struct TreeNode {
  enum class Kind : std::uint8_t {
    Leaf,       // entity embedding
    Knowledge,  // shallow logic node pairing a triple's head and tail leaves
    Merge,      // Huffman combination of two first-level items
  };

  NodeId id = -1;
  Kind kind = Kind::Leaf;
  NodeId left = -1;
  NodeId right = -1;
  EntityId entity = -1;   // Leaf only
  TripleKey triple{};     // Knowledge only
  std::int64_t weight = 0;
  Coverage coverage;

  bool is_leaf() const { return kind == Kind::Leaf; }
};

// Per-record binary tree: entity leaves, one shallow node per active
// knowledge triple, Huffman merges above, and a target distribution over
// the disease classes at every node.
struct KnowledgeTree {
  std::vector<TreeNode> nodes;  // arena; node id == index
  NodeId root = -1;
  int num_classes = 0;
  std::vector<std::vector<double>> targets;  // per node id, length num_classes

  const TreeNode& node(NodeId id) const { return nodes[static_cast<std::size_t>(id)]; }
};

// Active triples for a record: a triple fires when its premise entity (the
// head: the symptom for SID, the antecedent disease for DCS) is in the
// evidence set. Output preserves knowledge-list order.
std::vector<KnowledgeTriple> instantiate_knowledge(std::span<const EntityId> evidence,
                                                   std::span<const KnowledgeTriple> knowledge);

// Builds the knowledge tree for one record. Evidence entities uncovered by
// any active triple enter as standalone leaves weighted by their training
// frequency (minimum 1). Returns nullopt when there is nothing to build
// from; the caller records such cases as undiagnosable.
std::optional<KnowledgeTree> build_tree(std::span<const EntityId> evidence,
                                        std::span<const KnowledgeTriple> active,
                                        const CooccurrenceTable& cooccurrence,
                                        std::span<const std::int64_t> entity_frequency,
                                        int num_classes);

// Sum over first-level Huffman items of weight times depth below the root.
std::int64_t weighted_path_length(const KnowledgeTree& tree);

// Indented debug listing: node id, kind, weight, top-3 target classes.
std::string dump_tree(const KnowledgeTree& tree, const Vocabulary* vocab);

}  // namespace rnkn
