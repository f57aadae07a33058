#pragma once

// Deterministic agent handoff: intent state tensor codec, scoped token
// authorization, broker routing to registered specialist agents, and the
// reference portfolio agent with a closed-form mean-variance solve.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geoprobe/graph.hpp"
#include "geoprobe/timeutil.hpp"
#include "json.hpp"

namespace geoprobe::dah {

inline constexpr std::string_view kProtocolVersion = "DAH_v1.2";

struct AuthToken {
  std::string user_id;
  std::string session_token;
  // Wire order is kept; duplicates are rejected.
  std::vector<std::string> atomic_permissions;
  std::string cryptographic_signature;
  std::int64_t expiration_window_seconds = 0;

  bool operator==(const AuthToken&) const = default;
};

struct SessionContext {
  std::int64_t session_depth = 0;
  std::vector<std::string> semantic_history_vectors;
  std::map<std::string, std::string> user_preference_profile;

  bool operator==(const SessionContext&) const = default;
};

struct TargetEntity {
  std::string entity_name;
  std::string lei_code;
  double resolution_confidence = 0.0;

  bool operator==(const TargetEntity&) const = default;
};

struct StrictConstraints {
  // Whole cents; the wire carries a two-decimal dollar amount.
  std::int64_t portfolio_value_cents = 0;
  double target_annualized_yield = 0.0;
  double max_asset_turnover_ratio = 0.0;
  std::string rebalancing_algorithm;

  bool operator==(const StrictConstraints&) const = default;
};

struct TaskParams {
  TargetEntity target_entity;
  std::string execution_vector;
  StrictConstraints strict_constraints;
  std::vector<std::string> expected_output_modalities;

  bool operator==(const TaskParams&) const = default;
};

struct IntentStateTensor {
  std::string protocol_version{kProtocolVersion};
  std::string tensor_id;
  std::string timestamp;
  AuthToken u_auth;
  SessionContext c_context;
  TaskParams p_params;

  UnixSeconds issued_at() const { return parse_utc(timestamp); }
  bool operator==(const IntentStateTensor&) const = default;
};

// Strict decoding. Missing key -> SchemaError naming it (dotted path);
// unexpected key -> SchemaError; wrong JSON type -> TypeError; unknown
// protocol_version -> VersionError; out-of-range values -> DomainError.
IntentStateTensor parse_tensor(const nlohmann::json& doc);
IntentStateTensor parse_tensor(std::string_view text);
nlohmann::json tensor_to_json(const IntentStateTensor& t);
// Sorted keys, no whitespace.
std::string canonical(const IntentStateTensor& t);
// Canonical form with the signature field removed; this is what is signed.
std::string signing_body(const IntentStateTensor& t);
std::string compute_signature(const IntentStateTensor& t, std::string_view key);
IntentStateTensor sign(IntentStateTensor t, std::string_view key);

enum class DenyReason { kNone, kBadSignature, kExpired, kOutOfScope, kReplay };
const char* to_string(DenyReason r) noexcept;

struct AuthDecision {
  bool allowed = false;
  DenyReason reason = DenyReason::kNone;
};

// Allowed iff the signature verifies under `key`, now < issued + window, and
// `action` is one of the token's scopes (checked in that order).
AuthDecision authorize(const IntentStateTensor& t, std::string_view action, UnixSeconds now,
                       std::string_view key);

using Clock = std::function<UnixSeconds()>;

class FixedClock {
 public:
  explicit FixedClock(UnixSeconds now) : now_(now) {}
  UnixSeconds operator()() const { return now_; }

 private:
  UnixSeconds now_;
};

struct MarketModel {
  std::vector<std::string> assets;
  Eigen::VectorXd expected_returns;
  Eigen::MatrixXd covariance;
  // Holdings before rebalancing; empty when unknown.
  std::vector<double> current_weights;

  // Dimensions agree, covariance symmetric within 1e-12 and positive
  // definite (Cholesky), current weights (if any) sum to 1. ModelError
  // otherwise.
  void validate() const;
};

MarketModel parse_market(const nlohmann::json& doc);
nlohmann::json market_to_json(const MarketModel& m);

// Minimum-variance weights subject to mu'w = target and sum(w) = budget,
// from the closed-form stationarity solution. InfeasibleError when the
// target lies outside [min mu, max mu] (or differs from the common mean when
// all expected returns are equal).
Eigen::VectorXd mvo_solve(const MarketModel& market, double target_yield, double budget = 1.0);

struct AuditLine {
  std::size_t seq = 0;
  std::string action;
  bool allowed = false;
  DenyReason reason = DenyReason::kNone;
  UnixSeconds at = 0;
};

struct Computation {
  std::string id;
  std::string op;
  nlohmann::json result;
};

// Handed to an agent for one run. Every scoped action must pass require(),
// which writes an audit line; a denial aborts the run.
class AgentContext {
 public:
  AgentContext(const IntentStateTensor& tensor, std::string_view key, const Clock& clock);

  const IntentStateTensor& tensor() const noexcept { return tensor_; }
  void require(std::string_view action);
  // Records a deterministic computation and returns its id ("c1", "c2", ...).
  std::string log(std::string op, nlohmann::json result);

  const std::vector<AuditLine>& audit() const noexcept { return audit_; }
  const std::vector<Computation>& computations() const noexcept { return computations_; }

 private:
  const IntentStateTensor& tensor_;
  std::string_view key_;
  const Clock& clock_;
  std::vector<AuditLine> audit_;
  std::vector<Computation> computations_;
};

class SpecialistAgent {
 public:
  virtual ~SpecialistAgent() = default;
  virtual std::string name() const = 0;
  virtual std::string execution_vector() const = 0;
  // Scoped actions the agent performs, in order.
  virtual std::vector<std::string> declared_actions() const = 0;
  // Returns the receipt payload. Numeric claims reference computation ids.
  virtual nlohmann::json run(AgentContext& ctx) const = 0;
};

// Reference portfolio agent: reads the portfolio state, then runs the MVO
// simulation for the tensor's target yield.
class FinQuantAgent final : public SpecialistAgent {
 public:
  FinQuantAgent(MarketModel market, graph::KnowledgeGraph supply_chain,
                std::string execution_vector = "tier_2_semiconductor_tariff_exposure");

  std::string name() const override { return "finquant"; }
  std::string execution_vector() const override { return execution_vector_; }
  std::vector<std::string> declared_actions() const override;
  nlohmann::json run(AgentContext& ctx) const override;

  const graph::KnowledgeGraph& supply_chain() const noexcept { return supply_chain_; }

 private:
  MarketModel market_;
  graph::KnowledgeGraph supply_chain_;
  std::string supply_chain_digest_;
  std::string execution_vector_;
};

// Receipt document:
//   {"status": "EXECUTED" | "DENIED", "reason": null | deny reason,
//    "tensor_id", "execution_vector", "agent",
//    "result": agent payload or null,
//    "audit": [{"seq", "action", "decision", "reason", "at"}],
//    "computation_log": [{"id", "op", "result"}]}
// A denied receipt carries no result and an empty computation log.
struct ExecutionReceipt {
  nlohmann::json doc;

  bool executed() const { return doc.at("status") == "EXECUTED"; }
  std::string dump() const { return doc.dump(); }
};

class Broker {
 public:
  Broker(std::string key, Clock clock);

  // Throws ConflictError when the vector is already taken.
  void register_agent(std::shared_ptr<const SpecialistAgent> agent);

  // Unknown execution_vector -> RoutingError. A bad signature or a reused
  // tensor_id yields a DENIED receipt; tensor ids are consumed only once the
  // signature verifies.
  ExecutionReceipt handoff(const IntentStateTensor& tensor);

 private:
  std::string key_;
  Clock clock_;
  std::map<std::string, std::shared_ptr<const SpecialistAgent>> registry_;
  std::set<std::string> seen_tensors_;
  // Boxed so the broker stays movable.
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

}  // namespace geoprobe::dah
