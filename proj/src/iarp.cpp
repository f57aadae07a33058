#include "geoprobe/iarp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "geoprobe/crypto.hpp"
#include "geoprobe/determinism.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/timeutil.hpp"

namespace geoprobe::iarp {

using nlohmann::json;

const char* to_string(Route r) noexcept {
  switch (r) {
    case Route::kAccept: return "ACCEPT";
    case Route::kAgentFallback: return "AGENT_FALLBACK";
    case Route::kHumanArbitration: return "HUMAN_ARBITRATION";
  }
  return "?";
}

Route route_from_string(std::string_view s) {
  if (s == "ACCEPT") return Route::kAccept;
  if (s == "AGENT_FALLBACK") return Route::kAgentFallback;
  if (s == "HUMAN_ARBITRATION") return Route::kHumanArbitration;
  throw DomainError("unknown route '" + std::string(s) + "'");
}

void Thresholds::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw DomainError("delta must be in [0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must be in [0,1]");
  if (!(delta < epsilon)) throw DomainError("epsilon must exceed delta");
}

Route route(double iso, bool anomaly, const Thresholds& th) {
  if (anomaly || iso < th.delta) return Route::kHumanArbitration;
  if (iso < th.epsilon) return Route::kAgentFallback;
  return Route::kAccept;
}

std::vector<double> embed_prompt(std::string_view prompt, std::size_t dim) {
  if (dim == 0) throw DomainError("embedding dimension must be positive");
  SeededRng rng(derive_seed(0, prompt));
  std::vector<double> v(dim);
  double norm = 0.0;
  // Symmetric draws; a zero vector has probability zero but is guarded.
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

json packet_to_json(const IntentPacket& p) {
  return json{{"packet_id", p.packet_id},   {"prompt_id", p.prompt_id},
              {"prompt", p.prompt},         {"prompt_vector", p.prompt_vector},
              {"context_depth", p.context_depth}, {"t", p.t},
              {"seed", p.seed},             {"features", p.features},
              {"timestamp", p.timestamp}};
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

json costs_to_json(const graph::EditCosts& c) {
  return json{{"node_insert", c.node_insert},
              {"node_delete", c.node_delete},
              {"node_substitute", c.node_substitute},
              {"edge_insert", c.edge_insert},
              {"edge_delete", c.edge_delete},
              {"edge_substitute", c.edge_substitute},
              {"node_label", c.node_label == graph::NodeLabel::kEntityId ? "entity_id"
                                                                         : "entity_type"}};
}

const json& require(const json& doc, const char* key, const std::string& path) {
  auto it = doc.find(key);
  if (it == doc.end()) throw SchemaError(path.empty() ? key : path + "." + key);
  return *it;
}

std::string require_string(const json& doc, const char* key, const std::string& path) {
  const json& v = require(doc, key, path);
  if (!v.is_string()) throw TypeError(path.empty() ? key : path + "." + key, "a string");
  return v.get<std::string>();
}

}  // namespace

json result_to_json(const EvaluationResult& r) {
  return json{{"packet_id", r.packet_id},
              {"isomorphism_score", r.isomorphism_score},
              {"ged", r.ged},
              {"relation_recall", r.relation_recall},
              {"entropy_estimate", optional_json(r.entropy_estimate)},
              {"critical_anomaly", r.critical_anomaly},
              {"anomaly_reason", optional_json(r.anomaly_reason)},
              {"route_decision", to_string(r.route_decision)},
              {"g_gen", graph::graph_to_json(r.g_gen)},
              {"seed_trace", oracle::seed_trace_to_json(r.seed_trace)},
              {"inputs_digest", r.inputs_digest}};
}

EvaluationResult result_from_json(const json& doc) {
  EvaluationResult r;
  r.packet_id = require_string(doc, "packet_id", "result");
  r.isomorphism_score = require(doc, "isomorphism_score", "result").get<double>();
  r.ged = require(doc, "ged", "result").get<double>();
  r.relation_recall = require(doc, "relation_recall", "result").get<double>();
  if (const json& e = require(doc, "entropy_estimate", "result"); !e.is_null())
    r.entropy_estimate = e.get<double>();
  r.critical_anomaly = require(doc, "critical_anomaly", "result").get<bool>();
  if (const json& a = require(doc, "anomaly_reason", "result"); !a.is_null())
    r.anomaly_reason = a.get<std::string>();
  r.route_decision = route_from_string(require_string(doc, "route_decision", "result"));
  r.g_gen = graph::parse_graph_document(require(doc, "g_gen", "result")).graph;
  const json& st = require(doc, "seed_trace", "result");
  r.seed_trace = {st.at("seed").get<std::uint64_t>(), st.at("draws").get<std::uint64_t>()};
  r.inputs_digest = require_string(doc, "inputs_digest", "result");
  return r;
}

std::string inputs_digest(const IntentPacket& packet, const Thresholds& th,
                          const graph::EditCosts& costs) {
  json body{{"packet", packet_to_json(packet)},
            {"g_true", packet.g_true ? graph::graph_document_to_json(*packet.g_true)
                                     : json(nullptr)},
            {"thresholds", {{"delta", th.delta}, {"epsilon", th.epsilon}}},
            {"costs", costs_to_json(costs)}};
  return crypto::sha256_hex(body.dump());
}

EvaluationResult execute_probe(const IntentPacket& packet, const oracle::TargetEngine& engine,
                               const Thresholds& th, const graph::EditCosts& costs) {
  th.validate();
  costs.validate();
  if (!packet.g_true) throw DomainError("packet has no ground truth");
  const graph::KnowledgeGraph& truth = packet.g_true->graph;

  oracle::ProbeRequest request{packet.packet_id, packet.prompt, packet.prompt_vector,
                               packet.context_depth, packet.t, packet.seed};
  oracle::EngineOutput out = engine.probe(request);

  EvaluationResult r;
  r.packet_id = packet.packet_id;
  r.seed_trace = out.seed_trace;
  r.inputs_digest = inputs_digest(packet, th, costs);

  bool anomaly = false;
  std::optional<std::string> reason;
  try {
    const graph::VerifierReport report = graph::parse_verifier_report(out.raw_document);
    r.g_gen = graph::report_to_graph(report, packet.g_true->aliases);
    anomaly = report.critical_anomaly;
    reason = report.anomaly_reason;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::kParse:
      case ErrorKind::kSchema:
      case ErrorKind::kType:
      case ErrorKind::kIntegrity:
        r.g_gen = graph::KnowledgeGraph{};
        anomaly = true;
        reason = std::string(kMalformedReason);
        break;
      default:
        throw;
    }
  }

  r.ged = graph::ged(r.g_gen, truth, costs);
  r.isomorphism_score = graph::iso_score_from_ged(r.ged, r.g_gen, truth);
  std::size_t kept = 0;
  for (const auto& rel : truth.relations())
    if (r.g_gen.has_relation(rel.source, rel.target, rel.relation_type)) ++kept;
  r.relation_recall =
      truth.edge_count() == 0 ? 1.0
                              : static_cast<double>(kept) / static_cast<double>(truth.edge_count());
  if (!out.token_logprobs.empty()) r.entropy_estimate = oracle::logprob_entropy(out.token_logprobs);

  r.route_decision = route(r.isomorphism_score, anomaly, th);
  r.critical_anomaly = r.route_decision == Route::kHumanArbitration;
  if (r.critical_anomaly) r.anomaly_reason = reason ? *reason : std::string(kMismatchReason);
  return r;
}

json decision_to_json(const ArbitrationDecision& d) {
  return json{{"packet_id", d.packet_id},
              {"severity", iar::to_string(d.severity)},
              {"arbiter_id", d.arbiter_id},
              {"note", d.note},
              {"decided_at", d.decided_at}};
}

ArbitrationDecision decision_from_json(const json& doc) {
  if (!doc.is_object()) throw TypeError("decision", "an object");
  ArbitrationDecision d;
  d.packet_id = require_string(doc, "packet_id", "");
  d.severity = iar::severity_from_string(require_string(doc, "severity", ""));
  d.arbiter_id = require_string(doc, "arbiter_id", "");
  if (d.arbiter_id.empty()) throw DomainError("arbiter_id must not be empty");
  if (auto it = doc.find("note"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw TypeError("note", "a string");
    d.note = it->get<std::string>();
  }
  d.decided_at = require_string(doc, "decided_at", "");
  parse_utc(d.decided_at);
  return d;
}

// Ledger

std::vector<json> Ledger::parse(std::string_view text) {
  std::vector<json> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw ParseError("ledger line " + std::to_string(line_no) + " is not a JSON object");
    if (!rec.contains("seq") || !rec["seq"].is_number_unsigned() || !rec.contains("kind"))
      throw IntegrityError("ledger line " + std::to_string(line_no) + " lacks seq or kind");
    const auto seq = rec["seq"].get<std::uint64_t>();
    if (seq != out.size() + 1)
      throw IntegrityError("ledger line " + std::to_string(line_no) + " breaks the sequence");
    out.push_back(std::move(rec));
  }
  return out;
}

Ledger Ledger::open(const std::string& path) {
  Ledger l;
  if (std::ifstream in(path); in) {
    std::stringstream ss;
    ss << in.rdbuf();
    l.records_ = parse(ss.str());
  }
  l.path_ = path;
  l.file_.reset(std::fopen(path.c_str(), "ab"));
  if (!l.file_) throw UnavailableError("cannot open ledger " + path);
  return l;
}

Ledger Ledger::create(const std::string& path) {
  Ledger l;
  l.path_ = path;
  l.file_.reset(std::fopen(path.c_str(), "wb"));
  if (!l.file_) throw UnavailableError("cannot create ledger " + path);
  return l;
}

std::uint64_t Ledger::append(json record) {
  if (!record.is_object() || !record.contains("kind"))
    throw DomainError("ledger records are objects with a kind");
  const std::uint64_t seq = records_.size() + 1;
  record["seq"] = seq;
  if (file_) {
    const std::string line = record.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_.get()) != line.size() ||
        std::fflush(file_.get()) != 0)
      throw UnavailableError("ledger write failed: " + path_);
  }
  records_.push_back(std::move(record));
  return seq;
}

void Ledger::flush() {
  if (file_) std::fflush(file_.get());
}

std::string Ledger::dump() const {
  std::string out;
  for (const auto& r : records_) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json evaluation_record(const IntentPacket& packet, const EvaluationResult& result) {
  return json{{"kind", "evaluation"},
              {"packet", packet_to_json(packet)},
              {"result", result_to_json(result)}};
}

// Arbitration desk

ArbitrationDesk::ArbitrationDesk(Ledger& ledger, iar::IarModel model, double eta)
    : ledger_(ledger), model_(std::move(model)), eta_(eta) {
  if (!(eta >= 0.0)) throw DomainError("eta must be nonnegative");
  model_.validate();
  const auto& recs = ledger_.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const json& rec = recs[i];
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind == "evaluation") {
      const std::string id = rec.at("result").at("packet_id").get<std::string>();
      evaluation_index_[id] = i;
      if (rec.at("result").at("route_decision") == "HUMAN_ARBITRATION")
        pending_[rec.at("seq").get<std::uint64_t>()] = id;
    } else if (kind == "decision") {
      const json& d = rec.at("decision");
      const std::string id = d.at("packet_id").get<std::string>();
      decision_index_[id] = i;
      pending_.erase(rec.at("evaluation_seq").get<std::uint64_t>());
      model_ = iar::calibrate_gamma(model_, iar::severity_from_string(d.at("severity")), eta_, id);
    } else if (kind == "fit") {
      model_ = iar::model_from_json(rec.at("model"));
    }
  }
}

std::uint64_t ArbitrationDesk::record(const IntentPacket& packet, const EvaluationResult& result) {
  if (evaluation_index_.count(result.packet_id))
    throw ConflictError("packet '" + result.packet_id + "' already evaluated");
  const std::uint64_t seq = ledger_.append(evaluation_record(packet, result));
  evaluation_index_[result.packet_id] = ledger_.size() - 1;
  if (result.route_decision == Route::kHumanArbitration) pending_[seq] = result.packet_id;
  return seq;
}

std::vector<PendingItem> ArbitrationDesk::pending() const {
  std::vector<PendingItem> out;
  out.reserve(pending_.size());
  for (const auto& [seq, id] : pending_) out.push_back({seq, id});
  return out;
}

const json& ArbitrationDesk::evaluation(std::string_view packet_id) const {
  auto it = evaluation_index_.find(packet_id);
  if (it == evaluation_index_.end())
    throw NotFoundError("unknown packet '" + std::string(packet_id) + "'");
  return ledger_.records()[it->second];
}

const json* ArbitrationDesk::decision(std::string_view packet_id) const {
  auto it = decision_index_.find(packet_id);
  return it == decision_index_.end() ? nullptr : &ledger_.records()[it->second];
}

DecisionOutcome ArbitrationDesk::submit(const ArbitrationDecision& d) {
  const json& eval = evaluation(d.packet_id);
  if (decision_index_.count(d.packet_id))
    throw ConflictError("packet '" + d.packet_id + "' already has a decision");
  if (eval.at("result").at("route_decision") != "HUMAN_ARBITRATION")
    throw ConflictError("packet '" + d.packet_id + "' is not awaiting arbitration");
  const std::uint64_t eval_seq = eval.at("seq").get<std::uint64_t>();

  iar::IarModel next = iar::calibrate_gamma(model_, d.severity, eta_, d.packet_id);
  DecisionOutcome out{0, model_.gamma, next.gamma};
  out.decision_seq = ledger_.append(json{{"kind", "decision"},
                                         {"evaluation_seq", eval_seq},
                                         {"decision", decision_to_json(d)},
                                         {"gamma_before", out.gamma_before},
                                         {"gamma_after", out.gamma_after}});
  decision_index_[d.packet_id] = ledger_.size() - 1;
  pending_.erase(eval_seq);
  model_ = std::move(next);
  return out;
}

std::vector<ArbitrationDecision> parse_replay(std::string_view text) {
  std::vector<ArbitrationDecision> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded())
      throw ParseError("replay line " + std::to_string(line_no) + " is not JSON");
    out.push_back(decision_from_json(doc));
  }
  return out;
}

std::vector<ArbitrationDecision> load_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read replay file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_replay(ss.str());
}

std::vector<DecisionOutcome> apply_replay(ArbitrationDesk& desk,
                                          const std::vector<ArbitrationDecision>& decisions) {
  std::vector<DecisionOutcome> out;
  out.reserve(decisions.size());
  for (const auto& d : decisions) out.push_back(desk.submit(d));
  return out;
}

// Campaign

std::string packet_id_for(const PromptSpec& prompt, double t, std::size_t seed_index) {
  char tbuf[32];
  std::snprintf(tbuf, sizeof tbuf, "%g", t);
  return prompt.id + "/t" + tbuf + "/s" + std::to_string(seed_index);
}

std::vector<iar::LabeledObservation> labeled_observations(const Ledger& ledger) {
  std::map<std::uint64_t, iar::Severity> decided;
  for (const auto& rec : ledger.records()) {
    if (rec.at("kind") != "decision") continue;
    decided[rec.at("evaluation_seq").get<std::uint64_t>()] =
        iar::severity_from_string(rec.at("decision").at("severity"));
  }
  std::vector<iar::LabeledObservation> out;
  for (const auto& rec : ledger.records()) {
    if (rec.at("kind") != "evaluation") continue;
    const json& res = rec.at("result");
    const Route r = route_from_string(res.at("route_decision").get<std::string>());
    bool label;
    if (r == Route::kAccept) {
      label = true;
    } else if (r == Route::kHumanArbitration) {
      auto it = decided.find(rec.at("seq").get<std::uint64_t>());
      if (it == decided.end() || it->second == iar::Severity::kBenign) continue;
      label = false;
    } else {
      continue;
    }
    iar::LabeledObservation obs;
    obs.features = rec.at("packet").at("features").get<std::vector<double>>();
    obs.ged_normalized = std::clamp(1.0 - res.at("isomorphism_score").get<double>(), 0.0, 1.0);
    obs.label = label;
    out.push_back(std::move(obs));
  }
  return out;
}

namespace {

iar::FeatureVector derived_features(const PromptSpec& p, std::size_t n) {
  SeededRng rng(derive_seed(fnv1a(p.text), "features"));
  iar::FeatureVector x(n);
  for (auto& v : x) v = rng.uniform();
  return x;
}

std::vector<IntentPacket> build_packets(const CampaignSpec& spec,
                                        const std::shared_ptr<const graph::GraphDocument>& g_true) {
  const UnixSeconds epoch = parse_utc(spec.epoch);
  std::vector<IntentPacket> packets;
  packets.reserve(spec.prompts.size() * spec.t_grid.size() * spec.seeds);
  for (const auto& prompt : spec.prompts) {
    iar::FeatureVector x = prompt.features ? *prompt.features
                                           : derived_features(prompt, spec.feature_schema.size());
    if (x.size() != spec.feature_schema.size())
      throw DomainError("prompt '" + prompt.id + "' features do not match the schema");
    const auto embedding = embed_prompt(prompt.text);
    for (double t : spec.t_grid) {
      for (std::size_t s = 0; s < spec.seeds; ++s) {
        IntentPacket p;
        p.packet_id = packet_id_for(prompt, t, s);
        p.prompt_id = prompt.id;
        p.prompt = prompt.text;
        p.prompt_vector = embedding;
        p.context_depth = prompt.context_depth;
        p.t = t;
        p.seed = derive_seed(spec.master_seed, p.packet_id);
        p.features = x;
        p.g_true = g_true;
        p.timestamp = format_utc(epoch + static_cast<UnixSeconds>(std::llround(t * 86400.0)));
        packets.push_back(std::move(p));
      }
    }
  }
  return packets;
}

}  // namespace

CampaignResult run_campaign(const CampaignSpec& spec, const oracle::TargetEngine& engine,
                            std::shared_ptr<const graph::GraphDocument> g_true,
                            ArbitrationDesk& desk,
                            const std::vector<ArbitrationDecision>& replay) {
  spec.thresholds.validate();
  spec.costs.validate();
  if (!g_true) throw DomainError("campaign has no ground truth");
  if (spec.prompts.empty() || spec.t_grid.empty() || spec.seeds == 0)
    throw DomainError("campaign grid is empty");

  CampaignResult out;
  out.packets = build_packets(spec, g_true);
  {
    std::set<std::string> ids;
    for (const auto& p : out.packets)
      if (!ids.insert(p.packet_id).second)
        throw ConflictError("duplicate packet id '" + p.packet_id + "'");
  }

  const std::size_t n = out.packets.size();
  out.results.resize(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out.results[i] = execute_probe(out.packets[i], engine, spec.thresholds, spec.costs);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(spec.workers, n));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < n; ++i) desk.record(out.packets[i], out.results[i]);
  out.replayed = apply_replay(desk, replay);

  const auto observations = labeled_observations(desk.ledger());
  out.observations = observations.size();
  iar::IarModel start = iar::IarModel::zeros(spec.feature_schema, desk.model().gamma);
  start.history = desk.model().history;
  if (observations.empty()) {
    out.model = start;
    desk.ledger().append(json{{"kind", "fit"}, {"status", "skipped"}, {"observations", 0},
                              {"model", iar::model_to_json(start)}});
  } else {
    out.fit = iar::fit(start, observations, spec.fit);
    out.model = out.fit->model;
    desk.ledger().append(json{{"kind", "fit"},
                              {"status", "fitted"},
                              {"observations", observations.size()},
                              {"iterations", out.fit->iterations},
                              {"loss", out.fit->loss},
                              {"gradient_norm", out.fit->gradient_norm},
                              {"converged", out.fit->converged},
                              {"model", iar::model_to_json(out.model)}});
  }
  desk.set_model(out.model);
  return out;
}

}  // namespace geoprobe::iarp
