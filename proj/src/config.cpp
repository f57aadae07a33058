#include "geoprobe/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "geoprobe/errors.hpp"
#include "geoprobe/timeutil.hpp"

namespace geoprobe::config {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Accumulates violations instead of stopping at the first.
class Checker {
 public:
  std::vector<std::string> violations;

  void fail(const std::string& path, const std::string& problem) {
    violations.push_back(path + " " + problem);
  }

  void known_keys(const json& obj, const std::string& prefix, std::set<std::string> allowed) {
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(join(prefix, k), "is not a recognized key");
  }

  const json* object(const json& parent, const std::string& prefix, const char* key, bool required) {
    auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(prefix, key), "is required");
      return nullptr;
    }
    if (!it->is_object()) {
      fail(join(prefix, key), "must be an object");
      return nullptr;
    }
    return &*it;
  }

  // Returns `fallback` when absent or invalid (the violation is recorded).
  double number(const json& parent, const std::string& prefix, const char* key, double fallback,
                bool required) {
    auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(prefix, key), "is required");
      return fallback;
    }
    if (!it->is_number() || !std::isfinite(it->get<double>())) {
      fail(join(prefix, key), "must be a finite number");
      return fallback;
    }
    return it->get<double>();
  }

  std::optional<std::uint64_t> unsigned_int(const json& parent, const std::string& prefix,
                                            const char* key, bool required) {
    auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(prefix, key), "is required");
      return std::nullopt;
    }
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
      fail(join(prefix, key), "must be a nonnegative integer");
      return std::nullopt;
    }
    return it->get<std::uint64_t>();
  }

  std::optional<std::string> string(const json& parent, const std::string& prefix, const char* key,
                                    bool required) {
    auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(prefix, key), "is required");
      return std::nullopt;
    }
    if (!it->is_string() || it->get<std::string>().empty()) {
      fail(join(prefix, key), "must be a nonempty string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  void range(bool ok, const std::string& path, const std::string& problem) {
    if (!ok) fail(path, problem);
  }
};

std::string resolve(const std::string& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
  return path.lexically_normal().string();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError(path + " is not valid JSON");
  return doc;
}

void check_input_file(Checker& c, const std::string& key, const std::string& path, bool graph) {
  if (!fs::is_regular_file(path)) {
    c.fail(key, "refers to a missing file: " + path);
    return;
  }
  if (!graph) return;
  try {
    graph::parse_graph_document(read_json_file(path));
  } catch (const Error& e) {
    c.fail(key, std::string("is not a valid graph document: ") + e.what());
  }
}

void parse_decay(Checker& c, const json& doc, CampaignConfig& cfg) {
  const json* d = c.object(doc, "", "decay", true);
  if (d != nullptr) {
    c.known_keys(*d, "decay", {"c0", "lambda", "alpha", "vocab_size"});
    cfg.decay.c0 = c.number(*d, "decay", "c0", cfg.decay.c0, false);
    cfg.decay.lambda = c.number(*d, "decay", "lambda", cfg.decay.lambda, true);
    cfg.decay.alpha = c.number(*d, "decay", "alpha", cfg.decay.alpha, true);
    if (auto v = c.unsigned_int(*d, "decay", "vocab_size", false)) cfg.decay.vocab_size = *v;
    c.range(cfg.decay.c0 > 0.0 && cfg.decay.c0 <= 1.0, "decay.c0", "must be in (0, 1]");
    c.range(cfg.decay.lambda > 0.0, "decay.lambda", "must be positive");
    c.range(cfg.decay.alpha > 0.0 && cfg.decay.alpha < 1.0, "decay.alpha", "must be in (0, 1)");
    c.range(cfg.decay.vocab_size >= 2, "decay.vocab_size", "must be at least 2");
  }
  const json* e = c.object(doc, "", "entropy", true);
  if (e != nullptr) {
    c.known_keys(*e, "entropy", {"h_max", "rho"});
    cfg.entropy.h_max = c.number(*e, "entropy", "h_max", 0.0, true);
    cfg.entropy.rho = c.number(*e, "entropy", "rho", 0.0, true);
    if (cfg.decay.vocab_size >= 2)
      c.range(cfg.entropy.h_max >= 0.0 && cfg.entropy.h_max <= cfg.decay.log_vocab(),
              "entropy.h_max", "must be in [0, log(vocab_size)]");
    c.range(cfg.entropy.rho >= 0.0, "entropy.rho", "must be nonnegative");
  }
}

void parse_thresholds(Checker& c, const json& doc, iarp::Thresholds& th) {
  const json* t = c.object(doc, "", "thresholds", false);
  if (t == nullptr) return;
  c.known_keys(*t, "thresholds", {"delta", "epsilon"});
  th.delta = c.number(*t, "thresholds", "delta", th.delta, false);
  th.epsilon = c.number(*t, "thresholds", "epsilon", th.epsilon, false);
  const bool d_ok = th.delta >= 0.0 && th.delta <= 1.0;
  const bool e_ok = th.epsilon >= 0.0 && th.epsilon <= 1.0;
  c.range(d_ok, "thresholds.delta", "must be in [0, 1]");
  c.range(e_ok, "thresholds.epsilon", "must be in [0, 1]");
  if (d_ok && e_ok) c.range(th.epsilon > th.delta, "thresholds.epsilon", "must exceed delta");
}

void parse_costs(Checker& c, const json& doc, graph::EditCosts& costs) {
  const json* k = c.object(doc, "", "costs", false);
  if (k == nullptr) return;
  c.known_keys(*k, "costs",
               {"node_insert", "node_delete", "node_substitute", "edge_insert", "edge_delete",
                "edge_substitute", "node_label"});
  const std::pair<const char*, double*> fields[] = {
      {"node_insert", &costs.node_insert},         {"node_delete", &costs.node_delete},
      {"node_substitute", &costs.node_substitute}, {"edge_insert", &costs.edge_insert},
      {"edge_delete", &costs.edge_delete},         {"edge_substitute", &costs.edge_substitute}};
  for (const auto& [key, slot] : fields) {
    *slot = c.number(*k, "costs", key, *slot, false);
    c.range(*slot >= 0.0, join("costs", key), "must be nonnegative");
  }
  if (auto label = c.string(*k, "costs", "node_label", false)) {
    if (*label == "entity_id")
      costs.node_label = graph::NodeLabel::kEntityId;
    else if (*label == "entity_type")
      costs.node_label = graph::NodeLabel::kEntityType;
    else
      c.fail("costs.node_label", "must be \"entity_id\" or \"entity_type\"");
  }
}

void parse_fit(Checker& c, const json& doc, iar::FitConfig& fit) {
  const json* f = c.object(doc, "", "fit", false);
  if (f == nullptr) return;
  c.known_keys(*f, "fit",
               {"step_size", "step_growth", "max_iterations", "tolerance", "divergence_patience"});
  fit.step_size = c.number(*f, "fit", "step_size", fit.step_size, false);
  fit.step_growth = c.number(*f, "fit", "step_growth", fit.step_growth, false);
  fit.tolerance = c.number(*f, "fit", "tolerance", fit.tolerance, false);
  if (auto v = c.unsigned_int(*f, "fit", "max_iterations", false)) fit.max_iterations = *v;
  if (auto v = c.unsigned_int(*f, "fit", "divergence_patience", false))
    fit.divergence_patience = *v;
  c.range(fit.step_size > 0.0, "fit.step_size", "must be positive");
  c.range(fit.step_growth >= 1.0, "fit.step_growth", "must be at least 1");
  c.range(fit.tolerance > 0.0, "fit.tolerance", "must be positive");
  c.range(fit.max_iterations >= 1, "fit.max_iterations", "must be at least 1");
  c.range(fit.divergence_patience >= 1, "fit.divergence_patience", "must be at least 1");
}

void parse_schema(Checker& c, const json& doc, std::vector<std::string>& schema) {
  auto it = doc.find("feature_schema");
  if (it == doc.end()) return;
  if (!it->is_array() || it->empty()) {
    c.fail("feature_schema", "must be a nonempty array of names");
    return;
  }
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& v = (*it)[i];
    const std::string path = "feature_schema[" + std::to_string(i) + "]";
    if (!v.is_string() || v.get<std::string>().empty())
      c.fail(path, "must be a nonempty string");
    else if (!seen.insert(v.get<std::string>()).second)
      c.fail(path, "duplicates another feature name");
    else
      names.push_back(v.get<std::string>());
  }
  if (names.size() == it->size()) schema = std::move(names);
}

void parse_prompts(Checker& c, const json& doc, iarp::CampaignSpec& spec) {
  auto it = doc.find("prompts");
  if (it == doc.end()) {
    c.fail("prompts", "is required");
    return;
  }
  if (!it->is_array() || it->empty()) {
    c.fail("prompts", "must be a nonempty array");
    return;
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& p = (*it)[i];
    const std::string path = "prompts[" + std::to_string(i) + "]";
    if (!p.is_object()) {
      c.fail(path, "must be an object");
      continue;
    }
    c.known_keys(p, path, {"id", "text", "context_depth", "features"});
    iarp::PromptSpec ps;
    ps.id = c.string(p, path, "id", true).value_or("");
    ps.text = c.string(p, path, "text", true).value_or("");
    if (!ps.id.empty() && !ids.insert(ps.id).second) c.fail(join(path, "id"), "is not unique");
    if (auto d = c.unsigned_int(p, path, "context_depth", false)) ps.context_depth = static_cast<int>(*d);
    if (auto f = p.find("features"); f != p.end()) {
      bool ok = f->is_array() && f->size() == spec.feature_schema.size();
      iar::FeatureVector x;
      if (ok) {
        for (const auto& v : *f) {
          if (!v.is_number()) ok = false;
          else x.push_back(v.get<double>());
        }
      }
      if (ok)
        ps.features = std::move(x);
      else
        c.fail(join(path, "features"), "must be " + std::to_string(spec.feature_schema.size()) +
                                           " numbers matching feature_schema");
    }
    spec.prompts.push_back(std::move(ps));
  }
}

void parse_grid(Checker& c, const json& doc, iarp::CampaignSpec& spec) {
  auto it = doc.find("t_grid");
  if (it == doc.end()) {
    c.fail("t_grid", "is required");
  } else if (!it->is_array() || it->empty()) {
    c.fail("t_grid", "must be a nonempty array");
  } else {
    std::set<double> seen;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& v = (*it)[i];
      const std::string path = "t_grid[" + std::to_string(i) + "]";
      if (!v.is_number() || !(v.get<double>() >= 0.0) || !std::isfinite(v.get<double>()))
        c.fail(path, "must be a finite nonnegative number");
      else if (!seen.insert(v.get<double>()).second)
        c.fail(path, "repeats an earlier value");
      else
        spec.t_grid.push_back(v.get<double>());
    }
  }
  if (auto s = c.unsigned_int(doc, "", "seeds", true)) {
    spec.seeds = *s;
    c.range(*s >= 1, "seeds", "must be at least 1");
  }
  if (auto m = c.unsigned_int(doc, "", "master_seed", false)) spec.master_seed = *m;
  if (auto w = c.unsigned_int(doc, "", "workers", false)) {
    spec.workers = static_cast<unsigned>(*w);
    c.range(*w >= 1 && *w <= 256, "workers", "must be in [1, 256]");
  }
  if (auto e = c.string(doc, "", "epoch", false)) {
    try {
      parse_utc(*e);
      spec.epoch = *e;
    } catch (const Error&) {
      c.fail("epoch", "must look like 2026-01-01T00:00:00Z");
    }
  }
}

}  // namespace

CampaignConfig parse_config(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError({"config must be a JSON object"});
  Checker c;
  CampaignConfig cfg;
  c.known_keys(doc, "",
               {"ground_truth", "decoy_pool", "decay", "entropy", "prompts", "t_grid", "seeds",
                "master_seed", "thresholds", "costs", "feature_schema", "gamma", "eta", "fit",
                "epoch", "workers", "output_dir", "replay", "service"});

  if (auto p = c.string(doc, "", "ground_truth", true)) {
    cfg.ground_truth_path = resolve(base_dir, *p);
    check_input_file(c, "ground_truth", cfg.ground_truth_path, true);
  }
  if (auto p = c.string(doc, "", "decoy_pool", true)) {
    cfg.decoy_pool_path = resolve(base_dir, *p);
    check_input_file(c, "decoy_pool", cfg.decoy_pool_path, true);
  }
  if (auto p = c.string(doc, "", "replay", false)) {
    cfg.replay_path = resolve(base_dir, *p);
    check_input_file(c, "replay", *cfg.replay_path, false);
  }
  if (auto p = c.string(doc, "", "output_dir", false)) cfg.output_dir = *p;

  parse_decay(c, doc, cfg);
  auto& spec = cfg.campaign;
  parse_thresholds(c, doc, spec.thresholds);
  parse_costs(c, doc, spec.costs);
  parse_fit(c, doc, spec.fit);
  parse_schema(c, doc, spec.feature_schema);
  parse_prompts(c, doc, spec);
  parse_grid(c, doc, spec);

  spec.gamma = c.number(doc, "", "gamma", spec.gamma, false);
  c.range(spec.gamma > 0.0, "gamma", "must be positive");
  spec.eta = c.number(doc, "", "eta", spec.eta, false);
  c.range(spec.eta >= 0.0 && spec.eta < 1.0, "eta", "must be in [0, 1)");

  if (const json* s = c.object(doc, "", "service", false)) {
    c.known_keys(*s, "service", {"bearer_token"});
    cfg.bearer_token = c.string(*s, "service", "bearer_token", false);
  }

  if (!c.violations.empty()) throw ConfigError(std::move(c.violations));
  return cfg;
}

CampaignConfig load_config(const std::string& path) {
  const json doc = read_json_file(path);
  return parse_config(doc, fs::path(path).parent_path().string());
}

std::shared_ptr<const graph::GraphDocument> load_ground_truth(const CampaignConfig& cfg) {
  return std::make_shared<const graph::GraphDocument>(
      graph::parse_graph_document(read_json_file(cfg.ground_truth_path)));
}

oracle::CorpusState build_corpus(const CampaignConfig& cfg) {
  oracle::CorpusState corpus;
  corpus.ground_truth =
      std::make_shared<const graph::KnowledgeGraph>(load_ground_truth(cfg)->graph);
  corpus.decoy_pool =
      graph::parse_graph_document(read_json_file(cfg.decoy_pool_path)).graph.entities();
  corpus.decay = cfg.decay;
  corpus.entropy = cfg.entropy;
  corpus.validate();
  return corpus;
}

}  // namespace geoprobe::config
