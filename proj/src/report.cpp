#include "geoprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "geoprobe/errors.hpp"
#include "geoprobe/sed_model.hpp"

namespace geoprobe::report {

using nlohmann::json;

std::vector<DecayPoint> decay_series(const std::vector<iarp::IntentPacket>& packets,
                                     const std::vector<iarp::EvaluationResult>& results) {
  if (packets.size() != results.size())
    throw DomainError("packets and results differ in length");
  std::map<double, DecayPoint> by_t;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    DecayPoint& p = by_t[packets[i].t];
    p.t = packets[i].t;
    ++p.n;
    p.mean_iso += results[i].isomorphism_score;
    p.mean_relation_recall += results[i].relation_recall;
    if (results[i].route_decision == iarp::Route::kAccept) p.accept_fraction += 1.0;
  }
  std::vector<DecayPoint> out;
  for (auto& [t, p] : by_t) {
    const double n = static_cast<double>(p.n);
    p.mean_iso /= n;
    p.mean_relation_recall /= n;
    p.accept_fraction /= n;
    out.push_back(p);
  }
  return out;
}

std::string decay_series_csv(const std::vector<DecayPoint>& series) {
  std::string out = "t,n,mean_iso,accept_fraction,mean_relation_recall\n";
  char line[160];
  for (const auto& p : series) {
    std::snprintf(line, sizeof line, "%.12g,%zu,%.12g,%.12g,%.12g\n", p.t, p.n, p.mean_iso,
                  p.accept_fraction, p.mean_relation_recall);
    out += line;
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman needs equal-length inputs");
  if (x.size() < 2) throw DomainError("spearman needs at least two points");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("spearman is undefined for a constant input");
  return sxy / std::sqrt(sxx * syy);
}

std::map<std::string, std::size_t> route_histogram(const iarp::Ledger& ledger) {
  std::map<std::string, std::size_t> h{{"ACCEPT", 0}, {"AGENT_FALLBACK", 0}, {"HUMAN_ARBITRATION", 0}};
  for (const auto& rec : ledger.records())
    if (rec.at("kind") == "evaluation")
      ++h[rec.at("result").at("route_decision").get<std::string>()];
  return h;
}

json build_report(const config::CampaignConfig& cfg, const iarp::CampaignResult& result,
                  const iarp::Ledger& ledger, const std::string& generated_at) {
  const auto series = decay_series(result.packets, result.results);
  json series_doc = json::array();
  std::vector<double> ts, isos;
  std::vector<sed::DecaySample> recall_samples;
  for (const auto& p : series) {
    series_doc.push_back(json{{"t", p.t},
                              {"n", p.n},
                              {"mean_iso", p.mean_iso},
                              {"accept_fraction", p.accept_fraction},
                              {"mean_relation_recall", p.mean_relation_recall}});
    ts.push_back(p.t);
    isos.push_back(p.mean_iso);
    recall_samples.push_back({p.t, p.mean_relation_recall});
  }

  json lambda_hat = nullptr, lambda_note = nullptr;
  try {
    lambda_hat = sed::fit_lambda(recall_samples);
  } catch (const Error& e) {
    lambda_note = e.what();
  }
  json rho = nullptr;
  try {
    rho = spearman(ts, isos);
  } catch (const Error&) {
  }

  json trajectory = json::array();
  for (const auto& u : result.model.history)
    trajectory.push_back(json{{"packet_id", u.packet_id},
                              {"severity", iar::to_string(u.severity)},
                              {"gamma_before", u.gamma_before},
                              {"gamma_after", u.gamma_after}});

  json fit = json{{"status", result.fit ? "fitted" : "skipped"},
                  {"observations", result.observations}};
  if (result.fit) {
    fit["iterations"] = result.fit->iterations;
    fit["loss"] = result.fit->loss;
    fit["gradient_norm"] = result.fit->gradient_norm;
    fit["converged"] = result.fit->converged;
  }

  std::size_t total = 0, decisions = 0;
  const auto histogram = route_histogram(ledger);
  for (const auto& [k, v] : histogram) total += v;
  for (const auto& rec : ledger.records()) decisions += rec.at("kind") == "decision";

  return json{{"generated_at", generated_at},
              {"arbitration_mode", cfg.headless() ? "headless_replay" : "interactive"},
              {"master_seed", cfg.campaign.master_seed},
              {"total_probes", total},
              {"ledger_records", ledger.size()},
              {"route_histogram", histogram},
              {"pending_arbitrations", histogram.at("HUMAN_ARBITRATION") - decisions},
              {"decay_series", std::move(series_doc)},
              {"lambda_configured", cfg.decay.lambda},
              {"lambda_hat", lambda_hat},
              {"lambda_hat_basis", "mean_relation_recall"},
              {"lambda_hat_error", lambda_note},
              {"spearman_t_mean_iso", rho},
              {"gamma_initial", cfg.campaign.gamma},
              {"gamma_final", result.model.gamma},
              {"gamma_trajectory", std::move(trajectory)},
              {"fit", std::move(fit)},
              {"model", iar::model_to_json(result.model)}};
}

json without_timestamps(json report) {
  report.erase("generated_at");
  return report;
}

json graph_diff(const graph::KnowledgeGraph& truth, const graph::KnowledgeGraph& gen) {
  json missing_e = json::array(), fabricated_e = json::array(), mismatched_e = json::array();
  for (const auto& e : truth.entities()) {
    const graph::Entity* g = gen.find(e.entity_id);
    if (g == nullptr)
      missing_e.push_back(e.entity_id);
    else if (g->entity_type != e.entity_type)
      mismatched_e.push_back(json{{"entity_id", e.entity_id},
                                  {"expected_type", e.entity_type},
                                  {"generated_type", g->entity_type}});
  }
  for (const auto& e : gen.entities())
    if (truth.find(e.entity_id) == nullptr) fabricated_e.push_back(e.entity_id);

  auto triple = [](const graph::Relation& r) {
    return json{{"source", r.source}, {"relation_type", r.relation_type}, {"target", r.target}};
  };
  json missing_r = json::array(), fabricated_r = json::array();
  for (const auto& r : truth.relations())
    if (!gen.has_relation(r.source, r.target, r.relation_type)) missing_r.push_back(triple(r));
  for (const auto& r : gen.relations())
    if (!truth.has_relation(r.source, r.target, r.relation_type)) fabricated_r.push_back(triple(r));

  return json{{"missing_entities", std::move(missing_e)},
              {"fabricated_entities", std::move(fabricated_e)},
              {"mismatched_entities", std::move(mismatched_e)},
              {"missing_relations", std::move(missing_r)},
              {"fabricated_relations", std::move(fabricated_r)}};
}

}  // namespace geoprobe::report
