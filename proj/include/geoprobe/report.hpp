#pragma once

// Campaign report and the arbitration view helpers shared by the CLI and the
// HTTP service.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "geoprobe/config.hpp"
#include "geoprobe/iarp.hpp"
#include "json.hpp"

namespace geoprobe::report {

struct DecayPoint {
  double t = 0.0;
  std::size_t n = 0;
  double mean_iso = 0.0;
  double accept_fraction = 0.0;
  double mean_relation_recall = 0.0;
};

// One point per distinct t, ascending.
std::vector<DecayPoint> decay_series(const std::vector<iarp::IntentPacket>& packets,
                                     const std::vector<iarp::EvaluationResult>& results);

// Plain CSV with a header row: t,n,mean_iso,accept_fraction,mean_relation_recall
std::string decay_series_csv(const std::vector<DecayPoint>& series);

// Rank correlation with average ranks for ties. DomainError on size
// mismatch, fewer than 2 points, or a constant input.
double spearman(std::span<const double> x, std::span<const double> y);

// Counts of route decisions over the evaluation records of a ledger. All
// three routes are always present.
std::map<std::string, std::size_t> route_histogram(const iarp::Ledger& ledger);

// Deterministic apart from "generated_at", which is the only wall-clock field.
nlohmann::json build_report(const config::CampaignConfig& cfg, const iarp::CampaignResult& result,
                            const iarp::Ledger& ledger, const std::string& generated_at);

// Copy without the wall-clock field, for byte comparisons.
nlohmann::json without_timestamps(nlohmann::json report);

// Set differences between the reference and generated graphs:
//   missing_entities / fabricated_entities: ids on one side only
//   mismatched_entities: shared ids whose entity_type differs
//   missing_relations / fabricated_relations: (source, relation_type, target) on one side only
nlohmann::json graph_diff(const graph::KnowledgeGraph& truth, const graph::KnowledgeGraph& gen);

}  // namespace geoprobe::report
