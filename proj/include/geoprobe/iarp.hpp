#pragma once

// Probe loop: packet encapsulation, engine probing, verifier parsing, GED
// scoring, three-way routing, the append-only ledger and the arbitration
// queue that gates gamma calibration.

#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoprobe/ged.hpp"
#include "geoprobe/graph.hpp"
#include "geoprobe/iar.hpp"
#include "geoprobe/oracle.hpp"
#include "json.hpp"

namespace geoprobe::iarp {

enum class Route { kAccept, kAgentFallback, kHumanArbitration };

const char* to_string(Route r) noexcept;
Route route_from_string(std::string_view s);

struct Thresholds {
  double delta = 0.4;
  double epsilon = 0.8;

  // 0 <= delta < epsilon <= 1.
  void validate() const;
};

// anomaly or iso < delta -> HUMAN_ARBITRATION; delta <= iso < epsilon ->
// AGENT_FALLBACK; iso >= epsilon -> ACCEPT.
Route route(double iso, bool anomaly, const Thresholds& th);

inline constexpr std::string_view kMismatchReason = "Severe Graph Mismatch / Factual Fabrication";
inline constexpr std::string_view kMalformedReason = "malformed generation";

// Deterministic pseudo-embedding: a unit vector seeded by the prompt text.
std::vector<double> embed_prompt(std::string_view prompt, std::size_t dim = 8);

struct IntentPacket {
  std::string packet_id;
  std::string prompt_id;
  std::string prompt;
  std::vector<double> prompt_vector;
  int context_depth = 0;
  double t = 0.0;
  std::uint64_t seed = 0;
  iar::FeatureVector features;
  std::shared_ptr<const graph::GraphDocument> g_true;
  std::string timestamp;
};

// Packet inputs without the ground truth (which is shared by a campaign).
nlohmann::json packet_to_json(const IntentPacket& packet);

struct EvaluationResult {
  std::string packet_id;
  double isomorphism_score = 0.0;
  double ged = 0.0;
  // Fraction of ground-truth relations present in the generated graph.
  double relation_recall = 0.0;
  // Absent when the engine exposes no token log-probabilities.
  std::optional<double> entropy_estimate;
  bool critical_anomaly = false;
  std::optional<std::string> anomaly_reason;
  Route route_decision = Route::kHumanArbitration;
  graph::KnowledgeGraph g_gen;
  oracle::SeedTrace seed_trace;
  std::string inputs_digest;

  bool operator==(const EvaluationResult&) const = default;
};

nlohmann::json result_to_json(const EvaluationResult& r);
EvaluationResult result_from_json(const nlohmann::json& doc);

// SHA-256 over the canonical packet, ground truth, thresholds and costs.
std::string inputs_digest(const IntentPacket& packet, const Thresholds& th,
                          const graph::EditCosts& costs);

// Probe, parse, score and route one packet. Unparseable engine output is
// routed to human arbitration with reason "malformed generation"; engine
// transport errors propagate.
EvaluationResult execute_probe(const IntentPacket& packet, const oracle::TargetEngine& engine,
                               const Thresholds& th, const graph::EditCosts& costs);

struct ArbitrationDecision {
  std::string packet_id;
  iar::Severity severity = iar::Severity::kPartial;
  std::string arbiter_id;
  std::string note;
  std::string decided_at;

  bool operator==(const ArbitrationDecision&) const = default;
};

nlohmann::json decision_to_json(const ArbitrationDecision& d);
// Throws SchemaError / TypeError / DomainError on a bad document.
ArbitrationDecision decision_from_json(const nlohmann::json& doc);

// Append-only list of JSON records, one per line with sorted keys. Each
// record carries "seq" (strictly increasing from 1) and "kind". When bound
// to a file every append is written and flushed immediately.
class Ledger {
 public:
  Ledger() = default;
  // Loads any existing records from `path`, then appends to it.
  static Ledger open(const std::string& path);
  // Truncates `path` and starts empty.
  static Ledger create(const std::string& path);
  // Parses ledger lines; throws ParseError / IntegrityError on bad input.
  static std::vector<nlohmann::json> parse(std::string_view text);

  Ledger(Ledger&&) = default;
  Ledger& operator=(Ledger&&) = default;

  // Stamps "seq" onto `record` and returns it.
  std::uint64_t append(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::string& path() const noexcept { return path_; }
  void flush();
  std::string dump() const;

 private:
  std::vector<nlohmann::json> records_;
  std::string path_;
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file_{nullptr, &std::fclose};
};

nlohmann::json evaluation_record(const IntentPacket& packet, const EvaluationResult& result);

struct PendingItem {
  std::uint64_t evaluation_seq = 0;
  std::string packet_id;
};

struct DecisionOutcome {
  std::uint64_t decision_seq = 0;
  double gamma_before = 0.0;
  double gamma_after = 0.0;
};

// Pending human-arbitration items and the gamma they calibrate. All state is
// written through the ledger. Not thread-safe; callers serialize access.
class ArbitrationDesk {
 public:
  // Indexes records already in the ledger: pending items, decisions, and
  // the gamma trajectory (decisions are reapplied to `model`).
  ArbitrationDesk(Ledger& ledger, iar::IarModel model, double eta);

  // Appends the evaluation record and queues it when routed to humans.
  std::uint64_t record(const IntentPacket& packet, const EvaluationResult& result);

  // Pending items, oldest first.
  std::vector<PendingItem> pending() const;
  std::size_t pending_count() const noexcept { return pending_.size(); }

  // Latest evaluation record for a packet; throws NotFoundError.
  const nlohmann::json& evaluation(std::string_view packet_id) const;
  // Decision record for a packet, if any.
  const nlohmann::json* decision(std::string_view packet_id) const;

  // Unknown packet -> NotFoundError; already decided or not routed to
  // humans -> ConflictError. Appends the decision and recalibrates gamma.
  DecisionOutcome submit(const ArbitrationDecision& decision);

  const iar::IarModel& model() const noexcept { return model_; }
  void set_model(iar::IarModel model) { model_ = std::move(model); }
  double eta() const noexcept { return eta_; }
  Ledger& ledger() noexcept { return ledger_; }
  const Ledger& ledger() const noexcept { return ledger_; }

 private:
  Ledger& ledger_;
  iar::IarModel model_;
  double eta_;
  std::map<std::string, std::size_t, std::less<>> evaluation_index_;
  std::map<std::string, std::size_t, std::less<>> decision_index_;
  std::map<std::uint64_t, std::string> pending_;
};

// Replay file: one decision document per line.
std::vector<ArbitrationDecision> parse_replay(std::string_view text);
std::vector<ArbitrationDecision> load_replay(const std::string& path);
std::vector<DecisionOutcome> apply_replay(ArbitrationDesk& desk,
                                          const std::vector<ArbitrationDecision>& decisions);

struct PromptSpec {
  std::string id;
  std::string text;
  int context_depth = 0;
  // Drawn from the prompt embedding seed when absent.
  std::optional<iar::FeatureVector> features;
};

struct CampaignSpec {
  std::vector<PromptSpec> prompts;
  std::vector<double> t_grid;
  std::size_t seeds = 1;
  std::uint64_t master_seed = 0;
  Thresholds thresholds;
  graph::EditCosts costs;
  std::vector<std::string> feature_schema = iar::default_feature_schema();
  double gamma = 1.0;
  double eta = 0.1;
  iar::FitConfig fit;
  // Packet timestamps are epoch + t days.
  std::string epoch = "2026-01-01T00:00:00Z";
  unsigned workers = 1;
};

std::string packet_id_for(const PromptSpec& prompt, double t, std::size_t seed_index);

// Observations for fitting: ACCEPT -> positive, human-decided FATAL or
// PARTIAL -> negative. Fallback, BENIGN and undecided packets are skipped.
std::vector<iar::LabeledObservation> labeled_observations(const Ledger& ledger);

struct CampaignResult {
  std::vector<IntentPacket> packets;
  std::vector<EvaluationResult> results;
  std::vector<DecisionOutcome> replayed;
  iar::IarModel model;
  std::optional<iar::FitResult> fit;
  std::size_t observations = 0;
};

// Probes prompts x t_grid x seeds (workers in parallel, recorded in grid
// order), applies replayed decisions, then fits the betas on the labeled
// ledger. Zero observations appends a fit record with status "skipped".
CampaignResult run_campaign(const CampaignSpec& spec, const oracle::TargetEngine& engine,
                            std::shared_ptr<const graph::GraphDocument> g_true,
                            ArbitrationDesk& desk,
                            const std::vector<ArbitrationDecision>& replay = {});

}  // namespace geoprobe::iarp
