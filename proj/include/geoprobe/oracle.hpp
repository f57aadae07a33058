#pragma once

// Seeded simulated generative engine. Each probe emits a verifier-shaped
// report whose fidelity to the ground truth decays with the corpus clock,
// plus per-token log-probabilities for the white-box track.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoprobe/graph.hpp"
#include "geoprobe/sed_model.hpp"
#include "json.hpp"

namespace geoprobe::oracle {

struct CorpusState {
  std::shared_ptr<const graph::KnowledgeGraph> ground_truth;
  // Fabricated entities available as hallucinated relation targets. Their
  // ids never collide with ground-truth ids.
  std::vector<graph::Entity> decoy_pool;
  double clock = 0.0;
  sed::DecayParams decay;
  sed::EntropyTrajectory entropy;

  void validate() const;
  // confidence_at(clock) clamped to [0,1].
  double retention_probability() const;

  bool operator==(const CorpusState& other) const;
};

// Pure transition to clock + dt. Throws DomainError on negative dt.
CorpusState advance_clock(const CorpusState& corpus, double dt);

struct SeedTrace {
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;

  bool operator==(const SeedTrace&) const = default;
};

struct OracleResponse {
  graph::VerifierReport report;
  std::vector<double> token_logprobs;
  SeedTrace seed_trace;

  bool operator==(const OracleResponse&) const = default;
};

// Each ground-truth relation survives independently with the retention
// probability. A dropped relation is replaced, with probability alpha, by a
// decoy filling the same (source, relation_type) slot, and omitted
// otherwise. Two distinct decoys in one slot raise critical_anomaly.
// Deterministic in (corpus, packet_id, seed).
OracleResponse generate(const CorpusState& corpus, std::string_view packet_id,
                        std::uint64_t seed);

// Mean surprisal, -mean(logprob), in nats.
double logprob_entropy(std::span<const double> token_logprobs);
double logprob_entropy(const OracleResponse& response);

nlohmann::json seed_trace_to_json(const SeedTrace& trace);

// What a probe sends to a target engine.
struct ProbeRequest {
  std::string packet_id;
  std::string prompt;
  std::vector<double> prompt_vector;
  int context_depth = 0;
  double t = 0.0;
  std::uint64_t seed = 0;
};

// What comes back: the verifier document as raw text (so malformed output
// can be observed), the token log-probabilities when the engine exposes
// them, and the seed slice used.
struct EngineOutput {
  std::string raw_document;
  std::vector<double> token_logprobs;
  SeedTrace seed_trace;
};

class TargetEngine {
 public:
  virtual ~TargetEngine() = default;
  virtual std::string name() const = 0;
  virtual EngineOutput probe(const ProbeRequest& request) const = 0;
};

// Default engine: the corpus advanced by request.t, then generate().
class SimulatedEngine final : public TargetEngine {
 public:
  explicit SimulatedEngine(CorpusState base);
  std::string name() const override { return "simulator"; }
  EngineOutput probe(const ProbeRequest& request) const override;
  const CorpusState& base() const noexcept { return base_; }

 private:
  CorpusState base_;
};

// Placeholder for a remote engine reached over HTTP. The request body is
//   {"packet_id", "prompt", "prompt_vector", "context_depth", "temperature"}
// POSTed to `endpoint`; the expected response body is
//   {"verifier_report": <report document>, "token_logprobs": [..] | null}.
// No transport is wired up: probe() throws UnavailableError.
class RemoteEngineStub final : public TargetEngine {
 public:
  RemoteEngineStub(std::string endpoint, double temperature)
      : endpoint_(std::move(endpoint)), temperature_(temperature) {}
  std::string name() const override { return "remote:" + endpoint_; }
  nlohmann::json build_request(const ProbeRequest& request) const;
  // Converts a response body of the documented shape to EngineOutput.
  static EngineOutput decode_response(const nlohmann::json& body);
  EngineOutput probe(const ProbeRequest& request) const override;

 private:
  std::string endpoint_;
  double temperature_;
};

}  // namespace geoprobe::oracle
