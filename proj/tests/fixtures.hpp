#pragma once

#include <fstream>
#include <memory>
#include <string>

#include "geoprobe/graph.hpp"
#include "geoprobe/oracle.hpp"
#include "json.hpp"

namespace geoprobe::testing {

inline std::string fixture_path(const std::string& name) {
  return std::string(GEOPROBE_FIXTURE_DIR) + "/" + name;
}

inline nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  return nlohmann::json::parse(in);
}

inline graph::GraphDocument brand_document() {
  return graph::parse_graph_document(load_fixture("brand_graph.json"));
}

inline oracle::CorpusState brand_corpus(double lambda = 0.05) {
  oracle::CorpusState c;
  c.ground_truth = std::make_shared<const graph::KnowledgeGraph>(brand_document().graph);
  c.decoy_pool = graph::parse_graph_document(load_fixture("decoy_pool.json")).graph.entities();
  c.decay.c0 = 1.0;
  c.decay.lambda = lambda;
  c.decay.alpha = 0.3;
  c.decay.vocab_size = 32000;
  c.entropy.h_max = 0.1 * c.decay.log_vocab();
  c.entropy.rho = 0.1;
  return c;
}

}  // namespace geoprobe::testing
