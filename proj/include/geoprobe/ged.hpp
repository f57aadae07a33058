#pragma once

#include <cstddef>
#include <vector>

#include "geoprobe/graph.hpp"

namespace geoprobe::graph {

// Which entity field is compared when deciding whether two nodes carry the
// same label.
enum class NodeLabel { kEntityId, kEntityType };

// Unit costs by default. Substitution is free between equal labels and
// costs `*_substitute` otherwise; entity attributes never contribute.
struct EditCosts {
  double node_insert = 1.0;
  double node_delete = 1.0;
  double node_substitute = 1.0;
  double edge_insert = 1.0;
  double edge_delete = 1.0;
  double edge_substitute = 1.0;
  NodeLabel node_label = NodeLabel::kEntityId;

  void validate() const;
};

inline constexpr std::size_t kDefaultExactNodeCap = 16;

// Maps each node of the source graph to a node of the target graph, or to
// kDeleted.
struct NodeMapping {
  static constexpr std::size_t kDeleted = static_cast<std::size_t>(-1);
  std::vector<std::size_t> image;
};

// Total cost of the edit path induced by `mapping`: node substitutions and
// deletions, unmapped target nodes inserted, and for each node pair the
// cheapest transformation between the two edge-label multisets.
double edit_path_cost(const KnowledgeGraph& from, const KnowledgeGraph& to,
                      const NodeMapping& mapping, const EditCosts& costs);

// Exact GED by depth-first branch-and-bound over injective partial node
// mappings. Throws CapacityError when the combined node count exceeds
// `node_cap`.
double ged_exact(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                 const EditCosts& costs = {},
                 std::size_t node_cap = kDefaultExactNodeCap);

struct ApproxResult {
  double cost = 0.0;
  NodeMapping mapping;
};

// Bipartite GED: a square (n+m) assignment over substitution, deletion and
// insertion costs that include each node's local edge structure, followed
// by pairwise-swap refinement. The returned cost is the exact cost of a
// concrete edit path, so it never undercuts ged_exact.
ApproxResult ged_approx_mapping(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                                const EditCosts& costs = {});
double ged_approx(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                  const EditCosts& costs = {});

// ged_exact within the cap, ged_approx above it.
double ged(const KnowledgeGraph& g1, const KnowledgeGraph& g2, const EditCosts& costs = {},
           std::size_t node_cap = kDefaultExactNodeCap);

// 1 - GED / (size(g_gen) + size(g_true)), clamped to [0,1]. Two empty graphs
// score 1.
double iso_score_from_ged(double ged_value, const KnowledgeGraph& g_gen,
                          const KnowledgeGraph& g_true);
double iso_score(const KnowledgeGraph& g_gen, const KnowledgeGraph& g_true,
                 const EditCosts& costs = {},
                 std::size_t node_cap = kDefaultExactNodeCap);

}  // namespace geoprobe::graph
