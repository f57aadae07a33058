#pragma once

// Campaign configuration file: one JSON document. Relative paths resolve
// against the directory holding the file.
//
//   ground_truth   path to a graph document (entities, relations, aliases)  required
//   decoy_pool     path to a graph document whose entities feed fabrication  required
//   decay          {c0, lambda, alpha, vocab_size}                           required
//   entropy        {h_max, rho}                                             required
//   prompts        [{id, text, context_depth?, features?}]                   required
//   t_grid         [t, ...]                                                  required
//   seeds          probes per (prompt, t)                                    required
//   master_seed    default 0
//   thresholds     {delta = 0.4, epsilon = 0.8}
//   costs          edit costs, each defaulting to 1; node_label "entity_id" | "entity_type"
//   feature_schema default: the three built-in feature names
//   gamma, eta     default 1.0, 0.1
//   fit            {step_size, step_growth, max_iterations, tolerance, divergence_patience}
//   epoch          packet clock origin, default 2026-01-01T00:00:00Z
//   workers        default 1
//   output_dir     default "out"
//   replay         optional decision file; enables headless arbitration
//   service        {bearer_token?}

#include <optional>
#include <string>

#include "geoprobe/iarp.hpp"
#include "geoprobe/sed_model.hpp"
#include "json.hpp"

namespace geoprobe::config {

struct CampaignConfig {
  std::string ground_truth_path;
  std::string decoy_pool_path;
  sed::DecayParams decay;
  sed::EntropyTrajectory entropy;
  iarp::CampaignSpec campaign;
  std::string output_dir = "out";
  std::optional<std::string> replay_path;
  std::optional<std::string> bearer_token;

  bool headless() const noexcept { return replay_path.has_value(); }
};

// Validates everything it can and throws one ConfigError listing every
// violation ("<key path> <problem>"). `base_dir` anchors relative paths.
CampaignConfig parse_config(const nlohmann::json& doc, const std::string& base_dir);
// ParseError for unreadable or non-JSON files.
CampaignConfig load_config(const std::string& path);

// Loads the referenced graph files.
std::shared_ptr<const graph::GraphDocument> load_ground_truth(const CampaignConfig& cfg);
oracle::CorpusState build_corpus(const CampaignConfig& cfg);

}  // namespace geoprobe::config
