#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace geoprobe::graph {

using Attributes = std::map<std::string, std::string>;

struct Entity {
  std::string entity_id;
  std::string entity_type;
  Attributes attributes;

  bool operator==(const Entity&) const = default;
};

struct Relation {
  std::string source;
  std::string target;
  std::string relation_type;
  double confidence = 1.0;

  bool operator==(const Relation&) const = default;
};

// Maps normalized alias keys to the canonical entity id they resolve to.
using AliasTable = std::map<std::string, std::string>;

// Case-folds ASCII letters, trims surrounding whitespace and collapses inner
// whitespace runs to a single space.
std::string normalize_key(std::string_view raw);

// normalize_key followed by an alias lookup.
std::string resolve_entity_id(std::string_view raw, const AliasTable& aliases);

// Labeled directed multigraph. Entities are unique by id; relations are
// unique by (source, target, relation_type). Immutable once handed out by
// const reference; the mutators enforce the invariants.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Throws IntegrityError on an empty or duplicate id.
  void add_entity(Entity entity);
  // Throws IntegrityError on a dangling endpoint or a duplicate triple.
  void add_relation(Relation relation);

  const std::vector<Entity>& entities() const noexcept { return entities_; }
  const std::vector<Relation>& relations() const noexcept { return relations_; }

  std::size_t node_count() const noexcept { return entities_.size(); }
  std::size_t edge_count() const noexcept { return relations_.size(); }
  // |V| + |E|
  std::size_t size() const noexcept { return node_count() + edge_count(); }
  bool empty() const noexcept { return entities_.empty(); }

  std::optional<std::size_t> index_of(std::string_view entity_id) const;
  const Entity* find(std::string_view entity_id) const;
  bool has_relation(std::string_view source, std::string_view target,
                    std::string_view relation_type) const;

  bool operator==(const KnowledgeGraph& other) const;

 private:
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct VerifierReport {
  std::vector<Entity> extracted_entities;
  std::vector<Relation> extracted_relations;
  bool critical_anomaly = false;
  std::optional<std::string> anomaly_reason;

  bool operator==(const VerifierReport&) const = default;
};

struct ReportParseOptions {
  // Relations whose confidence_score is below this floor are dropped.
  double confidence_floor = 0.5;
};

// Parses the verifier output document:
//   {"extracted_entities": [{"entity_id", "entity_type", "attributes"}],
//    "extracted_relations": [{"source_entity", "target_entity",
//                             "relation_type", "confidence_score"}],
//    "critical_anomaly": bool, "anomaly_reason": string|null}
// Throws ParseError, SchemaError or IntegrityError.
VerifierReport parse_verifier_report(std::string_view doc,
                                     const ReportParseOptions& options = {});
VerifierReport verifier_report_from_json(const nlohmann::json& doc,
                                     const ReportParseOptions& options = {});

nlohmann::json report_to_json(const VerifierReport& report);
std::string serialize_report(const VerifierReport& report);

// Builds G_gen from a report, resolving ids through normalization and the
// alias table. Duplicate entities with conflicting types are an
// IntegrityError; duplicate triples keep the highest confidence.
KnowledgeGraph report_to_graph(const VerifierReport& report,
                               const AliasTable& aliases = {});

// Ground-truth graph document: the report's entity/relation shape plus an
// optional "aliases" object mapping surface forms to entity ids.
struct GraphDocument {
  KnowledgeGraph graph;
  AliasTable aliases;
};

GraphDocument parse_graph_document(const nlohmann::json& doc);
nlohmann::json graph_to_json(const KnowledgeGraph& graph);
nlohmann::json graph_document_to_json(const GraphDocument& doc);

}  // namespace geoprobe::graph
