#include "geoprobe/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <tuple>

#include "geoprobe/errors.hpp"

namespace geoprobe::graph {

using nlohmann::json;

std::string normalize_key(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto uch = static_cast<unsigned char>(ch);
    if (std::isspace(uch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(uch)));
  }
  return out;
}

std::string resolve_entity_id(std::string_view raw, const AliasTable& aliases) {
  std::string key = normalize_key(raw);
  if (auto it = aliases.find(key); it != aliases.end()) return it->second;
  return key;
}

void KnowledgeGraph::add_entity(Entity entity) {
  if (entity.entity_id.empty()) throw IntegrityError("entity_id must be nonempty");
  if (index_.count(entity.entity_id) != 0)
    throw IntegrityError("duplicate entity_id '" + entity.entity_id + "'");
  index_.emplace(entity.entity_id, entities_.size());
  entities_.push_back(std::move(entity));
}

void KnowledgeGraph::add_relation(Relation relation) {
  if (!index_of(relation.source))
    throw IntegrityError("relation source '" + relation.source + "' is not an entity");
  if (!index_of(relation.target))
    throw IntegrityError("relation target '" + relation.target + "' is not an entity");
  if (has_relation(relation.source, relation.target, relation.relation_type))
    throw IntegrityError("duplicate relation " + relation.source + " -" +
                         relation.relation_type + "-> " + relation.target);
  relations_.push_back(std::move(relation));
}

std::optional<std::size_t> KnowledgeGraph::index_of(std::string_view entity_id) const {
  auto it = index_.find(entity_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Entity* KnowledgeGraph::find(std::string_view entity_id) const {
  auto idx = index_of(entity_id);
  return idx ? &entities_[*idx] : nullptr;
}

bool KnowledgeGraph::has_relation(std::string_view source, std::string_view target,
                                  std::string_view relation_type) const {
  return std::any_of(relations_.begin(), relations_.end(), [&](const Relation& r) {
    return r.source == source && r.target == target && r.relation_type == relation_type;
  });
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const {
  return entities_ == other.entities_ && relations_ == other.relations_;
}

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path.empty() ? key : path + "." + key);
  return *it;
}

std::string require_string(const json& obj, const std::string& key,
                           const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw TypeError(path + "." + key, "a string");
  return v.get<std::string>();
}

// Verifier output frequently carries scores as strings ("0.93").
double require_score(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  double value = 0.0;
  if (v.is_number()) {
    value = v.get<double>();
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw TypeError(path + "." + key, "a number");
  } else {
    throw TypeError(path + "." + key, "a number");
  }
  if (!(value >= 0.0 && value <= 1.0))
    throw IntegrityError(path + "." + key + " must be in [0,1]");
  return value;
}

Attributes parse_attributes(const json& obj, const std::string& path) {
  Attributes attrs;
  auto it = obj.find("attributes");
  if (it == obj.end() || it->is_null()) return attrs;
  if (!it->is_object()) throw TypeError(path + ".attributes", "an object");
  for (const auto& [k, v] : it->items()) {
    attrs.emplace(k, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return attrs;
}

Entity parse_entity(const json& item, const std::string& path) {
  if (!item.is_object()) throw TypeError(path, "an object");
  Entity e;
  e.entity_id = require_string(item, "entity_id", path);
  e.entity_type = require_string(item, "entity_type", path);
  e.attributes = parse_attributes(item, path);
  if (normalize_key(e.entity_id).empty())
    throw IntegrityError(path + ".entity_id must be nonempty");
  return e;
}

Relation parse_relation(const json& item, const std::string& path) {
  if (!item.is_object()) throw TypeError(path, "an object");
  Relation r;
  r.source = require_string(item, "source_entity", path);
  r.target = require_string(item, "target_entity", path);
  r.relation_type = require_string(item, "relation_type", path);
  r.confidence = require_score(item, "confidence_score", path);
  return r;
}

const json& require_array(const json& doc, const std::string& key) {
  const json& v = require(doc, key, "");
  if (!v.is_array()) throw TypeError(key, "an array");
  return v;
}

json entity_to_json(const Entity& e) {
  json attrs = json::object();
  for (const auto& [k, v] : e.attributes) attrs[k] = v;
  return json{{"entity_id", e.entity_id}, {"entity_type", e.entity_type},
              {"attributes", attrs}};
}

json relation_to_json(const Relation& r) {
  return json{{"source_entity", r.source},
              {"target_entity", r.target},
              {"relation_type", r.relation_type},
              {"confidence_score", r.confidence}};
}

}  // namespace

VerifierReport parse_verifier_report(std::string_view doc,
                                     const ReportParseOptions& options) {
  json parsed;
  try {
    parsed = json::parse(doc.begin(), doc.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed verifier report: ") + e.what());
  }
  return verifier_report_from_json(parsed, options);
}

VerifierReport verifier_report_from_json(const json& doc, const ReportParseOptions& options) {
  if (!doc.is_object()) throw ParseError("verifier report must be a JSON object");
  VerifierReport report;

  const json& entities = require_array(doc, "extracted_entities");
  std::set<std::string> known;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Entity e = parse_entity(entities[i], "extracted_entities[" + std::to_string(i) + "]");
    known.insert(normalize_key(e.entity_id));
    report.extracted_entities.push_back(std::move(e));
  }

  const json& relations = require_array(doc, "extracted_relations");
  for (std::size_t i = 0; i < relations.size(); ++i) {
    const std::string path = "extracted_relations[" + std::to_string(i) + "]";
    Relation r = parse_relation(relations[i], path);
    if (known.count(normalize_key(r.source)) == 0)
      throw IntegrityError(path + ".source_entity '" + r.source + "' is not extracted");
    if (known.count(normalize_key(r.target)) == 0)
      throw IntegrityError(path + ".target_entity '" + r.target + "' is not extracted");
    if (r.confidence < options.confidence_floor) continue;
    report.extracted_relations.push_back(std::move(r));
  }

  const json& anomaly = require(doc, "critical_anomaly", "");
  if (!anomaly.is_boolean()) throw TypeError("critical_anomaly", "a boolean");
  report.critical_anomaly = anomaly.get<bool>();

  const json& reason = require(doc, "anomaly_reason", "");
  if (reason.is_string()) {
    report.anomaly_reason = reason.get<std::string>();
  } else if (!reason.is_null()) {
    throw TypeError("anomaly_reason", "a string or null");
  }
  if (report.critical_anomaly &&
      (!report.anomaly_reason || report.anomaly_reason->empty()))
    throw IntegrityError("critical_anomaly is set without an anomaly_reason");
  return report;
}

json report_to_json(const VerifierReport& report) {
  json entities = json::array();
  for (const auto& e : report.extracted_entities) entities.push_back(entity_to_json(e));
  json relations = json::array();
  for (const auto& r : report.extracted_relations) relations.push_back(relation_to_json(r));
  return json{{"extracted_entities", std::move(entities)},
              {"extracted_relations", std::move(relations)},
              {"critical_anomaly", report.critical_anomaly},
              {"anomaly_reason",
               report.anomaly_reason ? json(*report.anomaly_reason) : json(nullptr)}};
}

std::string serialize_report(const VerifierReport& report) {
  return report_to_json(report).dump();
}

KnowledgeGraph report_to_graph(const VerifierReport& report, const AliasTable& aliases) {
  std::vector<Entity> merged;
  std::map<std::string, std::size_t> slot;
  for (const auto& raw : report.extracted_entities) {
    const std::string id = resolve_entity_id(raw.entity_id, aliases);
    auto [it, inserted] = slot.emplace(id, merged.size());
    if (inserted) {
      merged.push_back(Entity{id, raw.entity_type, raw.attributes});
      continue;
    }
    Entity& existing = merged[it->second];
    if (existing.entity_type != raw.entity_type)
      throw IntegrityError("entity '" + id + "' resolved with conflicting types '" +
                           existing.entity_type + "' and '" + raw.entity_type + "'");
    existing.attributes.insert(raw.attributes.begin(), raw.attributes.end());
  }

  KnowledgeGraph g;
  for (auto& e : merged) g.add_entity(std::move(e));

  using Triple = std::tuple<std::string, std::string, std::string>;
  std::vector<Relation> relations;
  std::map<Triple, std::size_t> seen;
  for (const auto& raw : report.extracted_relations) {
    Relation r{resolve_entity_id(raw.source, aliases), resolve_entity_id(raw.target, aliases),
               raw.relation_type, raw.confidence};
    Triple key{r.source, r.target, r.relation_type};
    if (auto it = seen.find(key); it != seen.end()) {
      relations[it->second].confidence =
          std::max(relations[it->second].confidence, r.confidence);
      continue;
    }
    seen.emplace(std::move(key), relations.size());
    relations.push_back(std::move(r));
  }
  for (auto& r : relations) g.add_relation(std::move(r));
  return g;
}

GraphDocument parse_graph_document(const json& doc) {
  if (!doc.is_object()) throw ParseError("graph document must be a JSON object");
  GraphDocument out;
  if (auto it = doc.find("aliases"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) throw TypeError("aliases", "an object");
    for (const auto& [alias, target] : it->items()) {
      if (!target.is_string()) throw TypeError("aliases." + alias, "a string");
      out.aliases[normalize_key(alias)] = normalize_key(target.get<std::string>());
    }
  }
  const json& entities = require_array(doc, "entities");
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Entity e = parse_entity(entities[i], "entities[" + std::to_string(i) + "]");
    e.entity_id = resolve_entity_id(e.entity_id, out.aliases);
    out.graph.add_entity(std::move(e));
  }
  const json& relations = require_array(doc, "relations");
  for (std::size_t i = 0; i < relations.size(); ++i) {
    const std::string path = "relations[" + std::to_string(i) + "]";
    const json& item = relations[i];
    if (!item.is_object()) throw TypeError(path, "an object");
    Relation r;
    r.source = resolve_entity_id(require_string(item, "source_entity", path), out.aliases);
    r.target = resolve_entity_id(require_string(item, "target_entity", path), out.aliases);
    r.relation_type = require_string(item, "relation_type", path);
    r.confidence = item.contains("confidence_score")
                       ? require_score(item, "confidence_score", path)
                       : 1.0;
    out.graph.add_relation(std::move(r));
  }
  return out;
}

json graph_to_json(const KnowledgeGraph& graph) {
  json entities = json::array();
  for (const auto& e : graph.entities()) entities.push_back(entity_to_json(e));
  json relations = json::array();
  for (const auto& r : graph.relations()) relations.push_back(relation_to_json(r));
  return json{{"entities", std::move(entities)}, {"relations", std::move(relations)}};
}

json graph_document_to_json(const GraphDocument& doc) {
  json out = graph_to_json(doc.graph);
  json aliases = json::object();
  for (const auto& [k, v] : doc.aliases) aliases[k] = v;
  out["aliases"] = std::move(aliases);
  return out;
}

}  // namespace geoprobe::graph
