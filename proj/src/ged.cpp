#include "geoprobe/ged.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

#include "geoprobe/assignment.hpp"
#include "geoprobe/errors.hpp"

namespace geoprobe::graph {

void EditCosts::validate() const {
  for (double c : {node_insert, node_delete, node_substitute, edge_insert, edge_delete,
                   edge_substitute}) {
    if (!(c >= 0.0)) throw DomainError("edit costs must be nonnegative");
  }
}

namespace {

constexpr std::size_t kNone = NodeMapping::kDeleted;

class Interner {
 public:
  int id(const std::string& s) {
    auto [it, inserted] = ids_.emplace(s, static_cast<int>(ids_.size()));
    return it->second;
  }

 private:
  std::unordered_map<std::string, int> ids_;
};

using Labels = std::vector<int>;

// Integer-labelled view of a KnowledgeGraph. Parallel edges between the same
// ordered pair are kept as a sorted label multiset.
struct Compact {
  std::vector<int> node_label;
  std::unordered_map<std::uint64_t, Labels> pairs;
  std::vector<Labels> out_labels;
  std::vector<Labels> in_labels;
  struct Edge {
    std::size_t source;
    std::size_t target;
    int label;
  };
  std::vector<Edge> edges;

  std::size_t size() const { return node_label.size(); }

  static std::uint64_t key(std::size_t a, std::size_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  const Labels& pair(std::size_t a, std::size_t b) const {
    static const Labels kEmpty;
    auto it = pairs.find(key(a, b));
    return it == pairs.end() ? kEmpty : it->second;
  }
};

Compact compact(const KnowledgeGraph& g, NodeLabel mode, Interner& nodes, Interner& edges) {
  Compact c;
  c.node_label.reserve(g.node_count());
  for (const auto& e : g.entities()) {
    c.node_label.push_back(
        nodes.id(mode == NodeLabel::kEntityId ? e.entity_id : e.entity_type));
  }
  c.out_labels.resize(g.node_count());
  c.in_labels.resize(g.node_count());
  for (const auto& r : g.relations()) {
    const std::size_t s = *g.index_of(r.source);
    const std::size_t t = *g.index_of(r.target);
    const int label = edges.id(r.relation_type);
    c.pairs[Compact::key(s, t)].push_back(label);
    c.out_labels[s].push_back(label);
    c.in_labels[t].push_back(label);
    c.edges.push_back({s, t, label});
  }
  for (auto& [k, v] : c.pairs) std::sort(v.begin(), v.end());
  for (auto& v : c.out_labels) std::sort(v.begin(), v.end());
  for (auto& v : c.in_labels) std::sort(v.begin(), v.end());
  return c;
}

// Cheapest way to turn label multiset `a` into `b` with per-element delete,
// insert and substitute costs. Both inputs must be sorted.
double multiset_cost(const Labels& a, const Labels& b, double del, double ins, double sub) {
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const double r1 = static_cast<double>(a.size() - common);
  const double r2 = static_cast<double>(b.size() - common);
  const double k = sub < del + ins ? std::min(r1, r2) : 0.0;
  return k * sub + (r1 - k) * del + (r2 - k) * ins;
}

struct Problem {
  Compact from;
  Compact to;
  EditCosts costs;

  double node_cost(std::size_t i, std::size_t j) const {
    if (j == kNone) return costs.node_delete;
    return from.node_label[i] == to.node_label[j] ? 0.0 : costs.node_substitute;
  }

  double edge_pair_cost(const Labels& a, const Labels& b) const {
    return multiset_cost(a, b, costs.edge_delete, costs.edge_insert, costs.edge_substitute);
  }
};

Problem make_problem(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                     const EditCosts& costs) {
  costs.validate();
  Interner nodes, edges;
  Problem p{compact(g1, costs.node_label, nodes, edges),
            compact(g2, costs.node_label, nodes, edges), costs};
  return p;
}

double path_cost(const Problem& p, const std::vector<std::size_t>& image) {
  static const Labels kEmpty;
  const std::size_t n = p.from.size();
  const std::size_t m = p.to.size();
  std::vector<std::size_t> inverse(m, kNone);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += p.node_cost(i, image[i]);
    if (image[i] != kNone) inverse[image[i]] = i;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (inverse[j] == kNone) total += p.costs.node_insert;
  }
  for (const auto& [key, labels] : p.from.pairs) {
    const std::size_t a = image[key >> 32];
    const std::size_t b = image[key & 0xffffffffu];
    const Labels& other = (a == kNone || b == kNone) ? kEmpty : p.to.pair(a, b);
    total += p.edge_pair_cost(labels, other);
  }
  for (const auto& [key, labels] : p.to.pairs) {
    const std::size_t a = inverse[key >> 32];
    const std::size_t b = inverse[key & 0xffffffffu];
    if (a != kNone && b != kNone && p.from.pairs.count(Compact::key(a, b)) != 0) continue;
    total += p.edge_pair_cost(kEmpty, labels);
  }
  return total;
}

class BranchAndBound {
 public:
  BranchAndBound(const Problem& p, double upper_bound)
      : p_(p),
        best_(upper_bound),
        n_(p.from.size()),
        m_(p.to.size()),
        image_(n_, kNone),
        processed_(n_, 0),
        used_(m_, 0) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return degree(p_.from, a) > degree(p_.from, b);
    });
  }

  double run() {
    search(0, 0.0);
    return best_;
  }

 private:
  static std::size_t degree(const Compact& c, std::size_t i) {
    return c.out_labels[i].size() + c.in_labels[i].size();
  }

  // Cost of placing from-node u at `target`, against already-placed nodes.
  double placement_cost(std::size_t u, std::size_t target, std::size_t depth) const {
    static const Labels kEmpty;
    double c = p_.node_cost(u, target);
    const bool deleted = target == kNone;
    c += p_.edge_pair_cost(p_.from.pair(u, u), deleted ? kEmpty : p_.to.pair(target, target));
    for (std::size_t k = 0; k < depth; ++k) {
      const std::size_t w = order_[k];
      const std::size_t img = image_[w];
      const bool gap = deleted || img == kNone;
      c += p_.edge_pair_cost(p_.from.pair(u, w), gap ? kEmpty : p_.to.pair(target, img));
      c += p_.edge_pair_cost(p_.from.pair(w, u), gap ? kEmpty : p_.to.pair(img, target));
    }
    return c;
  }

  // Admissible estimate for everything not yet charged: remaining node
  // labels against unused target labels, and edges touching a remaining
  // node against target edges touching an unused node.
  double lower_bound(std::size_t depth) const {
    Labels a, b;
    for (std::size_t k = depth; k < n_; ++k) a.push_back(p_.from.node_label[order_[k]]);
    for (std::size_t j = 0; j < m_; ++j)
      if (!used_[j]) b.push_back(p_.to.node_label[j]);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double bound = multiset_cost(a, b, p_.costs.node_delete, p_.costs.node_insert,
                                 p_.costs.node_substitute);
    a.clear();
    b.clear();
    for (const auto& e : p_.from.edges)
      if (!processed_[e.source] || !processed_[e.target]) a.push_back(e.label);
    for (const auto& e : p_.to.edges)
      if (!used_[e.source] || !used_[e.target]) b.push_back(e.label);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    bound += p_.edge_pair_cost(a, b);
    return bound;
  }

  double completion_cost() const {
    double c = 0.0;
    for (std::size_t j = 0; j < m_; ++j)
      if (!used_[j]) c += p_.costs.node_insert;
    for (const auto& e : p_.to.edges)
      if (!used_[e.source] || !used_[e.target]) c += p_.costs.edge_insert;
    return c;
  }

  void search(std::size_t depth, double cost) {
    if (depth == n_) {
      best_ = std::min(best_, cost + completion_cost());
      return;
    }
    if (cost + lower_bound(depth) >= best_) return;
    const std::size_t u = order_[depth];
    processed_[u] = 1;
    for (std::size_t j = 0; j <= m_; ++j) {
      const std::size_t target = j == m_ ? kNone : j;
      if (target != kNone && used_[target]) continue;
      const double next = cost + placement_cost(u, target, depth);
      if (next >= best_) continue;
      image_[u] = target;
      if (target != kNone) used_[target] = 1;
      search(depth + 1, next);
      if (target != kNone) used_[target] = 0;
      image_[u] = kNone;
    }
    processed_[u] = 0;
  }

  const Problem& p_;
  double best_;
  std::size_t n_;
  std::size_t m_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> image_;
  std::vector<char> processed_;
  std::vector<char> used_;
};

ApproxResult approx(const Problem& p) {
  const std::size_t n = p.from.size();
  const std::size_t m = p.to.size();
  const std::size_t dim = n + m;
  ApproxResult result;
  result.mapping.image.assign(n, kNone);
  if (dim == 0) return result;

  static const Labels kEmpty;
  const double forbidden = 1e12;
  std::vector<double> cost(dim * dim, 0.0);
  // Incident edges are shared by two nodes, hence the halving.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double local = p.edge_pair_cost(p.from.out_labels[i], p.to.out_labels[j]) +
                           p.edge_pair_cost(p.from.in_labels[i], p.to.in_labels[j]);
      cost[i * dim + j] = p.node_cost(i, j) + 0.5 * local;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double incident =
          static_cast<double>(p.from.out_labels[i].size() + p.from.in_labels[i].size());
      cost[i * dim + m + k] =
          k == i ? p.costs.node_delete + 0.5 * incident * p.costs.edge_delete : forbidden;
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      const double incident =
          static_cast<double>(p.to.out_labels[j].size() + p.to.in_labels[j].size());
      cost[(n + k) * dim + j] =
          k == j ? p.costs.node_insert + 0.5 * incident * p.costs.edge_insert : forbidden;
    }
  }

  const Assignment assignment = solve_assignment(cost, dim, dim);
  std::vector<std::size_t>& image = result.mapping.image;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t col = assignment.row_to_col[i];
    image[i] = col < m ? col : kNone;
  }
  result.cost = path_cost(p, image);

  // Swap refinement: exchange the images of two source nodes, or move a
  // source node onto an unused target node, while that strictly helps.
  constexpr std::size_t kRefineLimit = 64;
  if (n > kRefineLimit || m > kRefineLimit) return result;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (image[a] == image[b]) continue;
        std::swap(image[a], image[b]);
        const double c = path_cost(p, image);
        if (c < result.cost - 1e-12) {
          result.cost = c;
          improved = true;
        } else {
          std::swap(image[a], image[b]);
        }
      }
      std::vector<char> used(m, 0);
      for (std::size_t i = 0; i < n; ++i)
        if (image[i] != kNone) used[image[i]] = 1;
      for (std::size_t j = 0; j <= m; ++j) {
        const std::size_t target = j == m ? kNone : j;
        if (target == image[a] || (target != kNone && used[target])) continue;
        const std::size_t previous = image[a];
        image[a] = target;
        const double c = path_cost(p, image);
        if (c < result.cost - 1e-12) {
          result.cost = c;
          improved = true;
          if (previous != kNone) used[previous] = 0;
          if (target != kNone) used[target] = 1;
        } else {
          image[a] = previous;
        }
      }
    }
  }
  return result;
}

}  // namespace

double edit_path_cost(const KnowledgeGraph& from, const KnowledgeGraph& to,
                      const NodeMapping& mapping, const EditCosts& costs) {
  const Problem p = make_problem(from, to, costs);
  if (mapping.image.size() != p.from.size())
    throw DomainError("mapping does not cover every source node");
  std::vector<char> seen(p.to.size(), 0);
  for (std::size_t img : mapping.image) {
    if (img == kNone) continue;
    if (img >= p.to.size() || seen[img]) throw DomainError("mapping is not injective");
    seen[img] = 1;
  }
  return path_cost(p, mapping.image);
}

ApproxResult ged_approx_mapping(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                                const EditCosts& costs) {
  return approx(make_problem(g1, g2, costs));
}

double ged_approx(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                  const EditCosts& costs) {
  return ged_approx_mapping(g1, g2, costs).cost;
}

double ged_exact(const KnowledgeGraph& g1, const KnowledgeGraph& g2, const EditCosts& costs,
                 std::size_t node_cap) {
  const std::size_t combined = g1.node_count() + g2.node_count();
  if (combined > node_cap) {
    throw CapacityError("exact GED is capped at " + std::to_string(node_cap) +
                        " combined nodes (got " + std::to_string(combined) +
                        "); use ged_approx");
  }
  const Problem p = make_problem(g1, g2, costs);
  const double upper = approx(p).cost;
  return BranchAndBound(p, upper).run();
}

double ged(const KnowledgeGraph& g1, const KnowledgeGraph& g2, const EditCosts& costs,
           std::size_t node_cap) {
  if (g1.node_count() + g2.node_count() <= node_cap) return ged_exact(g1, g2, costs, node_cap);
  return ged_approx(g1, g2, costs);
}

double iso_score_from_ged(double ged_value, const KnowledgeGraph& g_gen,
                          const KnowledgeGraph& g_true) {
  const double normalizer = static_cast<double>(g_gen.size() + g_true.size());
  if (normalizer == 0.0) return 1.0;
  return std::clamp(1.0 - ged_value / normalizer, 0.0, 1.0);
}

double iso_score(const KnowledgeGraph& g_gen, const KnowledgeGraph& g_true,
                 const EditCosts& costs, std::size_t node_cap) {
  return iso_score_from_ged(ged(g_gen, g_true, costs, node_cap), g_gen, g_true);
}

}  // namespace geoprobe::graph
