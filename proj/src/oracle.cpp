#include "geoprobe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "geoprobe/determinism.hpp"
#include "geoprobe/errors.hpp"

namespace geoprobe::oracle {

using nlohmann::json;

namespace {
constexpr double kLogprobNoise = 0.05;
constexpr double kMinProbability = 1e-12;
}  // namespace

void CorpusState::validate() const {
  if (!ground_truth || ground_truth->empty()) throw DomainError("ground truth is empty");
  decay.validate();
  entropy.validate(decay);
  if (!(clock >= 0.0)) throw DomainError("corpus clock must be nonnegative");
  for (const auto& d : decoy_pool) {
    if (ground_truth->find(graph::normalize_key(d.entity_id)) != nullptr)
      throw IntegrityError("decoy '" + d.entity_id + "' collides with a ground-truth entity");
  }
}

double CorpusState::retention_probability() const {
  return std::clamp(sed::confidence_at(decay, entropy, clock), 0.0, 1.0);
}

bool CorpusState::operator==(const CorpusState& other) const {
  const bool same_truth = ground_truth == other.ground_truth ||
                          (ground_truth && other.ground_truth &&
                           *ground_truth == *other.ground_truth);
  return same_truth && decoy_pool == other.decoy_pool && clock == other.clock &&
         decay.c0 == other.decay.c0 && decay.lambda == other.decay.lambda &&
         decay.alpha == other.decay.alpha && decay.vocab_size == other.decay.vocab_size &&
         entropy.h_max == other.entropy.h_max && entropy.rho == other.entropy.rho;
}

CorpusState advance_clock(const CorpusState& corpus, double dt) {
  if (!(dt >= 0.0)) throw DomainError("cannot advance the clock by a negative amount");
  CorpusState next = corpus;
  next.clock += dt;
  return next;
}

namespace {

std::string surface_form(const graph::Entity& e) {
  if (auto it = e.attributes.find("display_name"); it != e.attributes.end()) return it->second;
  return e.entity_id;
}

// Prefer a decoy of the same type as the entity it replaces.
const graph::Entity* pick_decoy(const std::vector<graph::Entity>& pool,
                                const std::string& type, SeededRng& rng) {
  if (pool.empty()) return nullptr;
  std::vector<const graph::Entity*> same;
  for (const auto& d : pool)
    if (d.entity_type == type) same.push_back(&d);
  if (same.empty()) return &pool[rng.below(pool.size())];
  return same[rng.below(same.size())];
}

}  // namespace

OracleResponse generate(const CorpusState& corpus, std::string_view packet_id,
                        std::uint64_t seed) {
  corpus.validate();
  const graph::KnowledgeGraph& truth = *corpus.ground_truth;
  const double p = corpus.retention_probability();
  const double alpha = corpus.decay.alpha;
  SeededRng rng(derive_seed(seed, packet_id));

  std::vector<char> keep_entity(truth.node_count(), 0);
  std::vector<graph::Relation> emitted;
  std::vector<const graph::Entity*> decoys_used;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> decoy_slots;

  for (const auto& r : truth.relations()) {
    const std::size_t s = *truth.index_of(r.source);
    const std::size_t t = *truth.index_of(r.target);
    const double extraction_confidence = rng.uniform(0.6, 1.0);
    if (rng.uniform() < p) {
      keep_entity[s] = keep_entity[t] = 1;
      emitted.push_back({surface_form(truth.entities()[s]),
                         surface_form(truth.entities()[t]), r.relation_type,
                         extraction_confidence});
      continue;
    }
    if (!(rng.uniform() < alpha)) continue;
    const graph::Entity* decoy =
        pick_decoy(corpus.decoy_pool, truth.entities()[t].entity_type, rng);
    if (decoy == nullptr) continue;
    keep_entity[s] = 1;
    if (std::find(decoys_used.begin(), decoys_used.end(), decoy) == decoys_used.end())
      decoys_used.push_back(decoy);
    decoy_slots[{r.source, r.relation_type}].insert(decoy->entity_id);
    emitted.push_back({surface_form(truth.entities()[s]), surface_form(*decoy),
                       r.relation_type, extraction_confidence});
  }

  // Entities without ground-truth relations are mentioned on their own.
  std::vector<char> incident(truth.node_count(), 0);
  for (const auto& r : truth.relations())
    incident[*truth.index_of(r.source)] = incident[*truth.index_of(r.target)] = 1;
  for (std::size_t i = 0; i < truth.node_count(); ++i) {
    if (!incident[i] && rng.uniform() < p) keep_entity[i] = 1;
  }

  OracleResponse out;
  auto& report = out.report;
  for (std::size_t i = 0; i < truth.node_count(); ++i) {
    if (!keep_entity[i]) continue;
    const auto& e = truth.entities()[i];
    report.extracted_entities.push_back({surface_form(e), e.entity_type, {}});
  }
  for (const auto* d : decoys_used)
    report.extracted_entities.push_back({surface_form(*d), d->entity_type, {}});

  // Collapse repeated decoy triples; the graph builder would do the same.
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (auto& r : emitted) {
    if (seen.emplace(r.source, r.target, r.relation_type).second)
      report.extracted_relations.push_back(std::move(r));
  }

  for (const auto& [slot, targets] : decoy_slots) {
    if (targets.size() < 2) continue;
    report.critical_anomaly = true;
    report.anomaly_reason = "contradictory claims for " + slot.first + " " + slot.second;
    break;
  }

  // One token per ground-truth fact, centred on ln(retention probability).
  const double base = std::log(std::max(p, kMinProbability));
  const std::size_t tokens = std::max<std::size_t>(truth.edge_count(), 1);
  out.token_logprobs.reserve(tokens);
  for (std::size_t i = 0; i < tokens; ++i) {
    const double noise = rng.uniform(-kLogprobNoise, kLogprobNoise);
    out.token_logprobs.push_back(std::min(0.0, base + noise));
  }

  out.seed_trace = {rng.seed(), rng.draws()};
  return out;
}

double logprob_entropy(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw DomainError("no token log-probabilities");
  double total = 0.0;
  for (double lp : token_logprobs) total -= lp;
  return total / static_cast<double>(token_logprobs.size());
}

double logprob_entropy(const OracleResponse& response) {
  return logprob_entropy(response.token_logprobs);
}

json seed_trace_to_json(const SeedTrace& trace) {
  return json{{"seed", trace.seed}, {"draws", trace.draws}};
}

SimulatedEngine::SimulatedEngine(CorpusState base) : base_(std::move(base)) {
  base_.validate();
}

EngineOutput SimulatedEngine::probe(const ProbeRequest& request) const {
  const CorpusState at_t = advance_clock(base_, request.t);
  OracleResponse r = generate(at_t, request.packet_id, request.seed);
  return {graph::serialize_report(r.report), std::move(r.token_logprobs), r.seed_trace};
}

json RemoteEngineStub::build_request(const ProbeRequest& request) const {
  return json{{"packet_id", request.packet_id},
              {"prompt", request.prompt},
              {"prompt_vector", request.prompt_vector},
              {"context_depth", request.context_depth},
              {"temperature", temperature_}};
}

EngineOutput RemoteEngineStub::decode_response(const json& body) {
  EngineOutput out;
  if (!body.is_object() || !body.contains("verifier_report"))
    throw SchemaError("verifier_report");
  out.raw_document = body.at("verifier_report").dump();
  if (auto it = body.find("token_logprobs"); it != body.end() && !it->is_null())
    out.token_logprobs = it->get<std::vector<double>>();
  return out;
}

EngineOutput RemoteEngineStub::probe(const ProbeRequest&) const {
  throw UnavailableError("remote engine " + endpoint_ + " has no transport configured");
}

}  // namespace geoprobe::oracle
