#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "geoprobe/determinism.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/iarp.hpp"
#include "geoprobe/timeutil.hpp"

using namespace geoprobe;
using iarp::Route;
using nlohmann::json;

namespace {

std::shared_ptr<const graph::GraphDocument> brand_doc() {
  static auto doc = std::make_shared<const graph::GraphDocument>(testing::brand_document());
  return doc;
}

graph::EditCosts campaign_costs() {
  graph::EditCosts c;
  c.node_substitute = 100.0;
  return c;
}

iarp::IntentPacket make_packet(const std::string& id, double t, std::uint64_t seed) {
  iarp::IntentPacket p;
  p.packet_id = id;
  p.prompt_id = "p";
  p.prompt = "what does easynote do";
  p.prompt_vector = iarp::embed_prompt(p.prompt);
  p.t = t;
  p.seed = seed;
  p.features = {0.5, 1.0, 0.5};
  p.g_true = brand_doc();
  p.timestamp = "2026-01-01T00:00:00Z";
  return p;
}

// Emits a fixed document regardless of the request.
class FixedEngine final : public oracle::TargetEngine {
 public:
  explicit FixedEngine(std::string doc) : doc_(std::move(doc)) {}
  std::string name() const override { return "fixed"; }
  oracle::EngineOutput probe(const oracle::ProbeRequest&) const override {
    return {doc_, {-0.1, -0.2}, {7, 0}};
  }

 private:
  std::string doc_;
};

// Every true relation redirected to a fabricated target of the same type.
graph::VerifierReport all_decoy_report() {
  const auto& truth = brand_doc()->graph;
  const auto pool =
      graph::parse_graph_document(testing::load_fixture("decoy_pool.json")).graph.entities();
  graph::VerifierReport r;
  std::set<std::string> emitted;
  auto emit = [&](const graph::Entity& e) {
    if (emitted.insert(e.entity_id).second) r.extracted_entities.push_back({e.entity_id, e.entity_type, {}});
  };
  for (const auto& rel : truth.relations()) {
    const auto* target = truth.find(rel.target);
    const graph::Entity* decoy = nullptr;
    for (const auto& d : pool)
      if (d.entity_type == target->entity_type && !emitted.count(d.entity_id)) decoy = &d;
    if (decoy == nullptr) decoy = &pool.front();
    emit(*truth.find(rel.source));
    emit(*decoy);
    r.extracted_relations.push_back({rel.source, decoy->entity_id, rel.relation_type, 0.9});
  }
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("geoprobe_iarp_" + name)).string();
}

iarp::ArbitrationDecision decision(const std::string& id, iar::Severity s) {
  return {id, s, "arbiter-1", "checked against the schema", "2026-01-02T09:00:00Z"};
}

iarp::CampaignSpec small_spec() {
  iarp::CampaignSpec spec;
  for (int i = 0; i < 5; ++i)
    spec.prompts.push_back({"prompt" + std::to_string(i), "prompt text " + std::to_string(i), 0, {}});
  spec.t_grid = {0, 5, 10, 20, 40};
  spec.seeds = 40;
  spec.master_seed = 2026;
  spec.costs = campaign_costs();
  return spec;
}

}  // namespace

TEST_CASE("route examples") {
  const iarp::Thresholds th;
  CHECK(iarp::route(0.85, false, th) == Route::kAccept);
  CHECK(iarp::route(0.99, true, th) == Route::kHumanArbitration);
  CHECK(iarp::route(th.delta, false, th) == Route::kAgentFallback);
  CHECK(iarp::route(th.epsilon, false, th) == Route::kAccept);
  CHECK(iarp::route(std::nextafter(th.delta, 0.0), false, th) == Route::kHumanArbitration);
  CHECK(iarp::route(std::nextafter(th.epsilon, 0.0), false, th) == Route::kAgentFallback);
}

TEST_CASE("thresholds validation") {
  CHECK_NOTHROW(iarp::Thresholds{}.validate());
  CHECK_THROWS_AS((iarp::Thresholds{0.8, 0.8}.validate()), DomainError);
  CHECK_THROWS_AS((iarp::Thresholds{-0.1, 0.8}.validate()), DomainError);
  CHECK_THROWS_AS((iarp::Thresholds{0.4, 1.1}.validate()), DomainError);
}

TEST_CASE("route names round trip") {
  for (Route r : {Route::kAccept, Route::kAgentFallback, Route::kHumanArbitration})
    CHECK(iarp::route_from_string(iarp::to_string(r)) == r);
  CHECK_THROWS_AS(iarp::route_from_string("accept"), DomainError);
}

TEST_CASE("prompt embedding") {
  const auto a = iarp::embed_prompt("knowledge graph on a canvas");
  double norm = 0;
  for (double x : a) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a == iarp::embed_prompt("knowledge graph on a canvas"));
  CHECK(a != iarp::embed_prompt("something else"));
}

TEST_CASE("execute_probe at t=0 accepts with iso 1") {
  oracle::SimulatedEngine engine(testing::brand_corpus());
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = iarp::execute_probe(make_packet("pk" + std::to_string(s), 0.0, s), engine, {},
                                       campaign_costs());
    CHECK(r.route_decision == Route::kAccept);
    CHECK(r.isomorphism_score == 1.0);
    CHECK(r.relation_recall == 1.0);
    CHECK_FALSE(r.critical_anomaly);
    CHECK(r.entropy_estimate.has_value());
    CHECK(r.inputs_digest.size() == 64);
  }
}

TEST_CASE("execute_probe is deterministic") {
  oracle::SimulatedEngine engine(testing::brand_corpus());
  const auto p = make_packet("prompt1/t20/s3", 20.0, 99);
  const auto a = iarp::execute_probe(p, engine, {}, campaign_costs());
  const auto b = iarp::execute_probe(p, engine, {}, campaign_costs());
  CHECK(a == b);
  CHECK(iarp::result_to_json(a).dump() == iarp::result_to_json(b).dump());
  CHECK(iarp::result_from_json(iarp::result_to_json(a)) == a);
}

TEST_CASE("all-decoy output goes to human arbitration") {
  const auto report = all_decoy_report();
  const auto g_gen = graph::report_to_graph(report, brand_doc()->aliases);
  const double iso = graph::iso_score(g_gen, brand_doc()->graph, campaign_costs());
  REQUIRE(iso < iarp::Thresholds{}.delta);

  FixedEngine engine(graph::serialize_report(report));
  const auto r = iarp::execute_probe(make_packet("decoy", 0.0, 1), engine, {}, campaign_costs());
  CHECK(r.isomorphism_score == doctest::Approx(iso).epsilon(1e-12));
  CHECK(r.relation_recall == 0.0);
  CHECK(r.route_decision == Route::kHumanArbitration);
  CHECK(r.critical_anomaly);
  CHECK(r.anomaly_reason == std::string(iarp::kMismatchReason));
}

TEST_CASE("verifier anomaly overrides a high score") {
  auto report = graph::VerifierReport{};
  for (const auto& e : brand_doc()->graph.entities())
    report.extracted_entities.push_back({e.entity_id, e.entity_type, {}});
  for (const auto& rel : brand_doc()->graph.relations())
    report.extracted_relations.push_back({rel.source, rel.target, rel.relation_type, 0.9});
  report.critical_anomaly = true;
  report.anomaly_reason = "two founding years";
  FixedEngine engine(graph::serialize_report(report));
  const auto r = iarp::execute_probe(make_packet("flag", 0.0, 1), engine, {}, campaign_costs());
  CHECK(r.isomorphism_score == 1.0);
  CHECK(r.route_decision == Route::kHumanArbitration);
  CHECK(r.anomaly_reason == std::string("two founding years"));
}

TEST_CASE("malformed engine output is absorbed") {
  for (const char* doc : {"not json", "{\"extracted_entities\": []}",
                          R"({"extracted_entities": [], "extracted_relations": [{"source_entity": "a",
                              "target_entity": "b", "relation_type": "r", "confidence_score": 0.9}],
                              "critical_anomaly": false, "anomaly_reason": null})"}) {
    FixedEngine engine(doc);
    const auto r = iarp::execute_probe(make_packet("bad", 0.0, 1), engine, {}, campaign_costs());
    CHECK(r.route_decision == Route::kHumanArbitration);
    CHECK(r.critical_anomaly);
    CHECK(r.anomaly_reason == std::string(iarp::kMalformedReason));
    CHECK(r.g_gen.empty());
    CHECK(r.isomorphism_score == 0.0);
  }
}

TEST_CASE("engine transport failure propagates") {
  oracle::RemoteEngineStub remote("http://engine.invalid", 0.7);
  CHECK_THROWS_AS(iarp::execute_probe(make_packet("r", 0.0, 1), remote, {}, {}), UnavailableError);
}

TEST_CASE("ledger file round trip") {
  const auto path = temp_path("ledger.jsonl");
  {
    auto ledger = iarp::Ledger::create(path);
    CHECK(ledger.append(json{{"kind", "note"}, {"b", 2}, {"a", 1}}) == 1);
    CHECK(ledger.append(json{{"kind", "note"}}) == 2);
    CHECK(read_file(path) == ledger.dump());
    CHECK(ledger.dump().substr(0, 30) == R"({"a":1,"b":2,"kind":"note","se)");
  }
  {
    auto ledger = iarp::Ledger::open(path);
    CHECK(ledger.size() == 2);
    CHECK(ledger.append(json{{"kind", "note"}}) == 3);
  }
  CHECK(iarp::Ledger::parse(read_file(path)).size() == 3);
  CHECK_THROWS_AS(iarp::Ledger::parse("{\"kind\":\"x\",\"seq\":2}\n"), IntegrityError);
  CHECK_THROWS_AS(iarp::Ledger::parse("{\"kind\":\"x\"}\n"), IntegrityError);
  CHECK_THROWS_AS(iarp::Ledger::parse("garbage\n"), ParseError);
  iarp::Ledger mem;
  CHECK_THROWS_AS(mem.append(json{{"no_kind", 1}}), DomainError);
  std::remove(path.c_str());
}

TEST_CASE("arbitration desk") {
  iarp::Ledger ledger;
  iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(iar::default_feature_schema(), 2.0), 0.1);
  FixedEngine bad("nope");
  oracle::SimulatedEngine good(testing::brand_corpus());
  for (int i = 0; i < 3; ++i) {
    const auto p = make_packet("h" + std::to_string(i), 0.0, 1);
    desk.record(p, iarp::execute_probe(p, bad, {}, campaign_costs()));
  }
  const auto ok = make_packet("ok", 0.0, 1);
  desk.record(ok, iarp::execute_probe(ok, good, {}, campaign_costs()));
  CHECK_THROWS_AS(desk.record(ok, iarp::execute_probe(ok, good, {}, campaign_costs())),
                  ConflictError);

  auto pending = desk.pending();
  REQUIRE(pending.size() == 3);
  CHECK(pending[0].packet_id == "h0");
  CHECK(pending[2].packet_id == "h2");

  const auto out = desk.submit(decision("h1", iar::Severity::kFatal));
  CHECK(out.gamma_before == 2.0);
  CHECK(out.gamma_after == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(desk.model().gamma == out.gamma_after);
  CHECK(desk.pending_count() == 2);
  CHECK(desk.decision("h1") != nullptr);
  CHECK(desk.decision("h1")->at("evaluation_seq") == 2);

  const auto before = ledger.size();
  CHECK_THROWS_AS(desk.submit(decision("h1", iar::Severity::kFatal)), ConflictError);
  CHECK_THROWS_AS(desk.submit(decision("ok", iar::Severity::kFatal)), ConflictError);
  CHECK_THROWS_AS(desk.submit(decision("ghost", iar::Severity::kFatal)), NotFoundError);
  CHECK(ledger.size() == before);
  CHECK(desk.model().gamma == out.gamma_after);

  // A desk rebuilt from the same ledger sees the same state.
  iarp::ArbitrationDesk reloaded(ledger, iar::IarModel::zeros(iar::default_feature_schema(), 2.0),
                                 0.1);
  CHECK(reloaded.pending_count() == 2);
  CHECK(reloaded.model() == desk.model());
}

TEST_CASE("decision documents") {
  const auto d = decision("x", iar::Severity::kBenign);
  CHECK(iarp::decision_from_json(iarp::decision_to_json(d)) == d);
  json missing = iarp::decision_to_json(d);
  missing.erase("severity");
  CHECK_THROWS_AS(iarp::decision_from_json(missing), SchemaError);
  json bad = iarp::decision_to_json(d);
  bad["severity"] = "fatal";
  CHECK_THROWS_AS(iarp::decision_from_json(bad), DomainError);
  bad = iarp::decision_to_json(d);
  bad["decided_at"] = "yesterday";
  CHECK_THROWS_AS(iarp::decision_from_json(bad), ParseError);
  CHECK_THROWS_AS(iarp::parse_replay("{\"packet_id\": 3}\n"), TypeError);
}

TEST_CASE("replay matches interactive submission") {
  auto build = [](iarp::Ledger& ledger) {
    iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(iar::default_feature_schema(), 1.0),
                               0.1);
    FixedEngine bad("nope");
    for (int i = 0; i < 3; ++i) {
      const auto p = make_packet("h" + std::to_string(i), 0.0, 1);
      desk.record(p, iarp::execute_probe(p, bad, {}, campaign_costs()));
    }
    return desk;
  };
  const std::string replay_text =
      R"({"packet_id":"h0","severity":"FATAL","arbiter_id":"a","note":"n","decided_at":"2026-01-02T00:00:00Z"}
{"packet_id":"h1","severity":"FATAL","arbiter_id":"a","note":"n","decided_at":"2026-01-02T00:01:00Z"}

{"packet_id":"h2","severity":"BENIGN","arbiter_id":"a","note":"n","decided_at":"2026-01-02T00:02:00Z"}
)";
  iarp::Ledger headless_ledger;
  auto headless = build(headless_ledger);
  iarp::apply_replay(headless, iarp::parse_replay(replay_text));

  iarp::Ledger live_ledger;
  auto live = build(live_ledger);
  for (const auto& d : iarp::parse_replay(replay_text)) live.submit(d);

  CHECK(std::abs(headless.model().gamma - 1.089) <= 1e-12);
  CHECK(headless_ledger.dump() == live_ledger.dump());
  CHECK(headless.model() == live.model());
  CHECK(headless.pending_count() == 0);
}

TEST_CASE("label policy") {
  iarp::Ledger ledger;
  iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(iar::default_feature_schema(), 1.0), 0.1);
  oracle::SimulatedEngine good(testing::brand_corpus());
  FixedEngine bad("nope");
  auto rec = [&](const std::string& id, const oracle::TargetEngine& e) {
    const auto p = make_packet(id, 0.0, 1);
    desk.record(p, iarp::execute_probe(p, e, {}, campaign_costs()));
  };
  rec("accept", good);
  rec("fatal", bad);
  rec("partial", bad);
  rec("benign", bad);
  rec("pending", bad);
  // A fallback: every entity but only two relations.
  {
    graph::VerifierReport half;
    for (const auto& e : brand_doc()->graph.entities())
      half.extracted_entities.push_back({e.entity_id, e.entity_type, {}});
    const auto& rels = brand_doc()->graph.relations();
    for (std::size_t i = 0; i < 2; ++i)
      half.extracted_relations.push_back({rels[i].source, rels[i].target, rels[i].relation_type, 1.0});
    FixedEngine fb(graph::serialize_report(half));
    const auto p = make_packet("fallback", 0.0, 1);
    const auto r = iarp::execute_probe(p, fb, {}, campaign_costs());
    REQUIRE(r.route_decision == Route::kAgentFallback);
    desk.record(p, r);
  }
  desk.submit(decision("fatal", iar::Severity::kFatal));
  desk.submit(decision("partial", iar::Severity::kPartial));
  desk.submit(decision("benign", iar::Severity::kBenign));

  const auto obs = iarp::labeled_observations(ledger);
  REQUIRE(obs.size() == 3);
  CHECK(obs[0].label);
  CHECK(obs[0].ged_normalized == 0.0);
  CHECK_FALSE(obs[1].label);
  CHECK(obs[1].ged_normalized == 1.0);
  CHECK_FALSE(obs[2].label);
  CHECK(obs[0].features == std::vector<double>{0.5, 1.0, 0.5});
}

TEST_CASE("campaign cardinality, determinism and decay") {
  oracle::SimulatedEngine engine(testing::brand_corpus());
  const auto spec = small_spec();
  const auto path_a = temp_path("a.jsonl");
  const auto path_b = temp_path("b.jsonl");

  auto run = [&](const std::string& path, unsigned workers) {
    auto ledger = iarp::Ledger::create(path);
    iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(spec.feature_schema, spec.gamma),
                               spec.eta);
    auto s = spec;
    s.workers = workers;
    return iarp::run_campaign(s, engine, brand_doc(), desk);
  };
  const auto a = run(path_a, 1);
  const auto b = run(path_b, 3);

  CHECK(a.results.size() == 1000);
  const auto records = iarp::Ledger::parse(read_file(path_a));
  std::size_t evaluations = 0;
  for (const auto& r : records) evaluations += r.at("kind") == "evaluation";
  CHECK(evaluations == 1000);
  CHECK(records.back().at("kind") == "fit");
  CHECK(records.back().at("status") == "fitted");
  CHECK(read_file(path_a) == read_file(path_b));
  CHECK(a.model == b.model);

  std::map<double, std::pair<int, int>> accept;
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    auto& [acc, n] = accept[a.packets[i].t];
    acc += a.results[i].route_decision == Route::kAccept;
    ++n;
  }
  const double at0 = double(accept[0].first) / accept[0].second;
  const double at40 = double(accept[40].first) / accept[40].second;
  CHECK(at40 < at0);

  CHECK(a.packets[0].packet_id == "prompt0/t0/s0");
  CHECK(a.packets[0].seed == derive_seed(2026, "prompt0/t0/s0"));
  CHECK(a.packets[40].timestamp == "2026-01-06T00:00:00Z");
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());
}

TEST_CASE("campaign without verified observations skips the fit") {
  FixedEngine bad("nope");
  auto spec = small_spec();
  spec.seeds = 2;
  iarp::Ledger ledger;
  iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(spec.feature_schema, 1.0), 0.1);
  const auto res = iarp::run_campaign(spec, bad, brand_doc(), desk);
  CHECK_FALSE(res.fit.has_value());
  CHECK(res.observations == 0);
  CHECK(ledger.records().back().at("status") == "skipped");
  CHECK(desk.pending_count() == 50);
}

TEST_CASE("campaign with replayed decisions") {
  FixedEngine bad("nope");
  auto spec = small_spec();
  spec.seeds = 1;
  spec.t_grid = {0};
  iarp::Ledger ledger;
  iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(spec.feature_schema, 1.0), 0.1);
  std::vector<iarp::ArbitrationDecision> replay{
      decision("prompt0/t0/s0", iar::Severity::kFatal),
      decision("prompt1/t0/s0", iar::Severity::kFatal),
      decision("prompt2/t0/s0", iar::Severity::kBenign)};
  const auto res = iarp::run_campaign(spec, bad, brand_doc(), desk, replay);
  CHECK(res.replayed.size() == 3);
  CHECK(std::abs(res.model.gamma - 1.089) <= 1e-12);
  CHECK(res.observations == 2);
  CHECK(desk.pending_count() == 2);
}

TEST_CASE("utc timestamps") {
  CHECK(parse_utc("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_utc("2026-04-02T10:00:00Z") == 1775124000);
  CHECK(format_utc(1775124000 + 300) == "2026-04-02T10:05:00Z");
  CHECK_THROWS_AS(parse_utc("2026-04-02 10:00:00"), ParseError);
  CHECK_THROWS_AS(parse_utc("2026-02-30T10:00:00Z"), ParseError);
  CHECK_THROWS_AS(parse_utc("2026-04-02T10:00:00.5Z"), ParseError);
}
