#include <cmath>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "geoprobe/commands.hpp"
#include "geoprobe/config.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/report.hpp"
#include "geoprobe/service.hpp"
#include "httplib.h"
#include "scratch.hpp"

using namespace geoprobe;
using namespace geoprobe::testing;
using nlohmann::json;

namespace {

json campaign_doc() { return load_fixture("campaign.json"); }

std::vector<std::string> violations_of(const json& doc) {
  try {
    config::parse_config(doc, GEOPROBE_FIXTURE_DIR);
  } catch (const ConfigError& e) {
    return e.violations();
  }
  return {};
}

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// One prompt at t=0 and t=40: all ACCEPT at t=0, mostly humans at t=40.
config::CampaignConfig small_config(const std::string& out_dir) {
  json doc = campaign_doc();
  doc["prompts"] = json::array({doc["prompts"][0]});
  doc["t_grid"] = {0, 40};
  doc["seeds"] = 10;
  doc["output_dir"] = out_dir;
  return config::parse_config(doc, GEOPROBE_FIXTURE_DIR);
}

service::ServiceOptions service_options(const config::CampaignConfig& cfg,
                                        const std::string& ledger_path) {
  service::ServiceOptions o;
  o.ledger_path = ledger_path;
  o.model = iar::IarModel::zeros(cfg.campaign.feature_schema, cfg.campaign.gamma);
  o.eta = cfg.campaign.eta;
  o.g_true = config::load_ground_truth(cfg);
  o.now = [] { return std::string("2026-05-01T00:00:00Z"); };
  return o;
}

// Server on an ephemeral port, served from a background thread.
class LiveServer {
 public:
  explicit LiveServer(service::ServiceOptions o) : server_(std::move(o)) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.listen(); });
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_connection_timeout(5);
    c.set_read_timeout(5);
    return c;
  }
  int port() const { return port_; }

 private:
  service::ArbitrationServer server_;
  int port_ = 0;
  std::thread thread_;
};

std::string encode(const std::string& id) {
  std::string out;
  for (char ch : id) out += ch == '/' ? std::string("%2F") : std::string(1, ch);
  return out;
}

json decision_body(const std::string& severity, const std::string& at) {
  return json{{"severity", severity}, {"arbiter_id", "coordinator-1"}, {"note", "checked"},
              {"decided_at", at}};
}

}  // namespace

TEST_CASE("campaign fixture loads with the configured values") {
  const auto cfg = config::load_config(fixture_path("campaign.json"));
  CHECK(cfg.decay.lambda == 0.05);
  CHECK(cfg.decay.alpha == 0.3);
  CHECK(cfg.campaign.prompts.size() == 5);
  CHECK(cfg.campaign.t_grid == std::vector<double>{0, 5, 10, 20, 40});
  CHECK(cfg.campaign.seeds == 40);
  CHECK(cfg.campaign.costs.node_substitute == 100);
  CHECK(cfg.campaign.costs.node_insert == 1);
  CHECK_FALSE(cfg.headless());
  CHECK(std::filesystem::path(cfg.ground_truth_path).is_absolute());
}

TEST_CASE("minimal config gets defaults") {
  json doc = campaign_doc();
  for (const char* k : {"thresholds", "costs", "gamma", "eta", "master_seed", "output_dir"})
    doc.erase(k);
  const auto cfg = config::parse_config(doc, GEOPROBE_FIXTURE_DIR);
  CHECK(cfg.campaign.thresholds.delta == 0.4);
  CHECK(cfg.campaign.thresholds.epsilon == 0.8);
  CHECK(cfg.campaign.costs.node_substitute == 1.0);
  CHECK(cfg.campaign.gamma == 1.0);
  CHECK(cfg.campaign.eta == 0.1);
  CHECK(cfg.campaign.master_seed == 0);
  CHECK(cfg.campaign.workers == 1);
  CHECK(cfg.campaign.epoch == "2026-01-01T00:00:00Z");
  CHECK(cfg.campaign.feature_schema == iar::default_feature_schema());
  CHECK(cfg.output_dir == "out");
  CHECK_FALSE(cfg.bearer_token.has_value());
}

TEST_CASE("threshold ordering violation") {
  json doc = campaign_doc();
  doc["thresholds"] = {{"delta", 0.8}, {"epsilon", 0.8}};
  const auto v = violations_of(doc);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "thresholds.epsilon must exceed delta");
}

TEST_CASE("all violations are reported together") {
  json doc = campaign_doc();
  doc["decay"]["lambda"] = -1;
  doc["decay"]["alpha"] = 1.5;
  doc.erase("seeds");
  doc["ground_truth"] = "no_such_graph.json";
  doc["t_grid"] = {0, 5, 5};
  doc["surprise"] = true;
  doc["prompts"][1]["features"] = {0.5};
  doc["costs"]["edge_insert"] = "one";
  const auto v = violations_of(doc);
  CHECK(v.size() == 8);
  CHECK(has(v, "decay.lambda must be positive"));
  CHECK(has(v, "decay.alpha must be in (0, 1)"));
  CHECK(has(v, "seeds is required"));
  CHECK(has(v, "t_grid[2] repeats an earlier value"));
  CHECK(has(v, "surprise is not a recognized key"));
  CHECK(has(v, "costs.edge_insert must be a finite number"));
  CHECK(std::any_of(v.begin(), v.end(),
                    [](const auto& s) { return s.rfind("ground_truth refers to a missing file", 0) == 0; }));
  CHECK(std::any_of(v.begin(), v.end(),
                    [](const auto& s) { return s.rfind("prompts[1].features", 0) == 0; }));
}

TEST_CASE("replay key enables headless arbitration") {
  json doc = campaign_doc();
  doc["replay"] = "replay_sample.jsonl";
  const auto cfg = config::parse_config(doc, GEOPROBE_FIXTURE_DIR);
  CHECK(cfg.headless());
  doc["replay"] = "missing.jsonl";
  CHECK(violations_of(doc).size() == 1);
  CHECK_THROWS_AS(config::load_config(fixture_path("nope.json")), ParseError);
}

TEST_CASE("spearman matches reference values") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{5, 6, 7, 8, 7};
  CHECK(std::abs(report::spearman(x, y) - 0.8207826816681233) < 1e-12);
  const std::vector<double> t{0, 5, 10, 20, 40}, s{1, 0.9, 0.9, 0.5, 0.2};
  CHECK(std::abs(report::spearman(t, s) - (-0.9746794344808964)) < 1e-12);
  const std::vector<double> flat{1, 1, 1};
  CHECK_THROWS_AS(report::spearman(flat, flat), DomainError);
}

TEST_CASE("graph diff sets") {
  const auto doc = brand_document();
  const json same = report::graph_diff(doc.graph, doc.graph);
  for (const auto& [k, v] : same.items()) CHECK(v.empty());

  graph::KnowledgeGraph gen = doc.graph;
  gen.add_entity({"shenzhen", "Location", {}});
  gen.add_relation({"yishu technology", "shenzhen", "headquartered_in", 1.0});
  const json d = report::graph_diff(doc.graph, gen);
  CHECK(d["fabricated_relations"].size() == 1);
  CHECK(d["fabricated_entities"] == json::array({"shenzhen"}));
  CHECK(d["missing_relations"].empty());
  CHECK(d["missing_entities"].empty());
}

TEST_CASE("probe command writes deterministic artifacts") {
  ScratchDir a("probe_a"), b("probe_b");
  const auto cfg = config::load_config(fixture_path("campaign.json"));
  commands::ProbeOptions opts;
  opts.generated_at = "2026-06-01T00:00:00Z";
  opts.out_dir = a.path().string();
  const auto first = commands::run_probe(cfg, opts);
  opts.out_dir = b.path().string();
  opts.workers = 3;
  opts.generated_at = "2026-06-02T00:00:00Z";
  const auto second = commands::run_probe(cfg, opts);

  CHECK(slurp(first.ledger_path) == slurp(second.ledger_path));
  CHECK(slurp(first.decay_series_path) == slurp(second.decay_series_path));
  const json ra = json::parse(slurp(first.report_path));
  const json rb = json::parse(slurp(second.report_path));
  CHECK(ra != rb);
  CHECK(report::without_timestamps(ra) == report::without_timestamps(rb));

  std::size_t total = 0;
  for (const auto& [k, v] : ra["route_histogram"].items()) total += v.get<std::size_t>();
  CHECK(total == 1000);
  CHECK(ra["total_probes"] == 1000);
  std::size_t evaluations = 0;
  for (const auto& rec : iarp::Ledger::parse(slurp(first.ledger_path)))
    evaluations += rec["kind"] == "evaluation";
  CHECK(evaluations == total);
  CHECK(ra["arbitration_mode"] == "interactive");
  const auto& series = ra["decay_series"];
  REQUIRE(series.size() == 5);
  CHECK(series[4]["accept_fraction"].get<double>() < series[0]["accept_fraction"].get<double>());
  CHECK(slurp(first.decay_series_path).rfind("t,n,mean_iso,accept_fraction,mean_relation_recall\n", 0) == 0);
}

TEST_CASE("probe with replay reports the gamma trajectory") {
  ScratchDir dir("probe_replay");
  auto cfg = config::load_config(fixture_path("campaign.json"));
  commands::ProbeOptions opts;
  opts.out_dir = dir.path().string();
  opts.replay_path = fixture_path("replay_sample.jsonl");
  const auto out = commands::run_probe(cfg, opts);
  CHECK(out.report["arbitration_mode"] == "headless_replay");
  REQUIRE(out.report["gamma_trajectory"].size() == 3);
  CHECK(std::abs(out.report["gamma_final"].get<double>() - 1.089) < 1e-12);
  CHECK(out.report["pending_arbitrations"] ==
        out.report["route_histogram"]["HUMAN_ARBITRATION"].get<std::size_t>() - 3);
}

TEST_CASE("handoff command") {
  commands::HandoffOptions o;
  o.tensor_path = fixture_path("intent_tensor_signed.json");
  o.market_path = fixture_path("market_2asset.json");
  o.supply_chain_path = fixture_path("supply_chain.json");
  o.key = "demo-broker-key";
  o.now = parse_utc("2026-04-02T10:01:00Z");
  auto out = commands::run_handoff(o);
  CHECK(out.exit_code == commands::kExitOk);
  const auto w = out.receipt.doc["result"]["weights"]["value"].get<std::vector<double>>();
  CHECK(std::abs(w[0] - 0.5) < 1e-9);
  CHECK(std::abs(w[1] - 0.5) < 1e-9);

  o.now = parse_utc("2026-04-02T10:05:01Z");
  out = commands::run_handoff(o);
  CHECK(out.exit_code == commands::kExitDenied);
  CHECK(out.receipt.doc["reason"] == "EXPIRED");

  o.now = parse_utc("2026-04-02T10:01:00Z");
  o.key = "another-key";
  CHECK(commands::run_handoff(o).receipt.doc["reason"] == "BAD_SIGNATURE");

  ScratchDir dir("handoff");
  json market = load_fixture("market_2asset.json");
  market["expected_returns"] = {0.05, 0.06};
  spit(dir.file("low.json"), market.dump());
  o.key = "demo-broker-key";
  o.market_path = dir.file("low.json");
  try {
    commands::run_handoff(o);
    FAIL("expected infeasible");
  } catch (const Error& e) {
    CHECK(commands::exit_code_for(e) == commands::kExitInfeasible);
  }
  o.market_path = fixture_path("market_2asset.json");
  o.tensor_path = fixture_path("market_2asset.json");
  try {
    commands::run_handoff(o);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(commands::exit_code_for(e) == commands::kExitSchema);
  }
}

TEST_CASE("service on an empty ledger") {
  ScratchDir dir("svc_empty");
  const auto cfg = small_config(dir.path().string());
  LiveServer server(service_options(cfg, dir.file("ledger.jsonl")));
  auto c = server.client();
  auto res = c.Get("/queue");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body) == json::array());
  res = c.Get("/metrics");
  REQUIRE(res);
  const json m = json::parse(res->body);
  CHECK(m["pending_count"] == 0);
  CHECK(m["gamma"] == 1.0);
  CHECK(m["route_histogram"]["ACCEPT"] == 0);
  res = c.Get("/packets/nothing");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("service arbitration flow") {
  ScratchDir dir("svc_flow");
  const auto cfg = small_config(dir.path().string());
  commands::ProbeOptions opts;
  const auto probe = commands::run_probe(cfg, opts);
  const auto ledger_path = probe.ledger_path;
  const std::size_t humans = probe.report["route_histogram"]["HUMAN_ARBITRATION"];
  REQUIRE(humans >= 3);

  // Copy of the ledger that gets the same decisions through the desk.
  const std::string twin = dir.file("twin.jsonl");
  spit(twin, slurp(ledger_path));

  std::vector<std::string> decided;
  {
    LiveServer server(service_options(cfg, ledger_path));
    auto c = server.client();

    auto res = c.Get("/queue");
    REQUIRE(res);
    json queue = json::parse(res->body);
    REQUIRE(queue.size() == humans);
    for (std::size_t i = 1; i < queue.size(); ++i)
      CHECK(queue[i]["evaluation_seq"].get<std::uint64_t>() >
            queue[i - 1]["evaluation_seq"].get<std::uint64_t>());

    const std::string id = queue[0]["packet_id"];
    res = c.Get(("/packets/" + encode(id)).c_str());
    REQUIRE(res);
    CHECK(res->status == 200);
    json view = json::parse(res->body);
    CHECK(view["evaluation"]["result"]["packet_id"] == id);
    CHECK(view["g_true"]["entities"].size() == 7);
    CHECK(view["decision"].is_null());
    CHECK(view["diff"].contains("fabricated_relations"));
    // Raw slashes work too.
    res = c.Get(("/packets/" + id).c_str());
    REQUIRE(res);
    CHECK(res->status == 200);

    const std::vector<std::string> severities{"FATAL", "FATAL", "BENIGN"};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string pid = queue[i]["packet_id"];
      res = c.Post(("/packets/" + encode(pid) + "/decision").c_str(),
                   decision_body(severities[i], "2026-05-0" + std::to_string(i + 1) + "T00:00:00Z").dump(),
                   "application/json");
      REQUIRE(res);
      CHECK(res->status == 200);
      decided.push_back(pid);
      res = c.Get("/metrics");
      const json m = json::parse(res->body);
      CHECK(m["pending_count"] == humans - i - 1);
    }
    res = c.Get("/metrics");
    CHECK(std::abs(json::parse(res->body)["gamma"].get<double>() - 1.089) < 1e-12);

    // Second decision on the same packet.
    res = c.Post(("/packets/" + encode(decided[0]) + "/decision").c_str(),
                 decision_body("BENIGN", "2026-05-09T00:00:00Z").dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(c.Get("/metrics")->body)["decisions"] == 3);

    res = c.Post("/packets/nothing/decision", decision_body("FATAL", "2026-05-09T00:00:00Z").dump(),
                 "application/json");
    CHECK(res->status == 404);
    const std::string open_id = json::parse(c.Get("/queue")->body)[0]["packet_id"];
    res = c.Post(("/packets/" + encode(open_id) + "/decision").c_str(),
                 decision_body("CATASTROPHIC", "2026-05-09T00:00:00Z").dump(), "application/json");
    CHECK(res->status == 400);
    json no_arbiter = decision_body("FATAL", "2026-05-09T00:00:00Z");
    no_arbiter.erase("arbiter_id");
    res = c.Post(("/packets/" + encode(open_id) + "/decision").c_str(), no_arbiter.dump(),
                 "application/json");
    CHECK(res->status == 400);
    res = c.Post(("/packets/" + encode(open_id) + "/decision").c_str(), "{not json",
                 "application/json");
    CHECK(res->status == 400);
    // An accepted packet is not awaiting arbitration.
    const std::string accepted = cfg.campaign.prompts[0].id + "/t0/s0";
    res = c.Post(("/packets/" + encode(accepted) + "/decision").c_str(),
                 decision_body("FATAL", "2026-05-09T00:00:00Z").dump(), "application/json");
    CHECK(res->status == 409);

    res = c.Get(("/packets/" + encode(decided[0])).c_str());
    CHECK(json::parse(res->body)["decision"]["decision"]["severity"] == "FATAL");
  }

  // Interactive submissions leave the same ledger as the desk path.
  {
    auto ledger = iarp::Ledger::open(twin);
    iarp::ArbitrationDesk desk(ledger, iar::IarModel::zeros(cfg.campaign.feature_schema, 1.0), 0.1);
    const std::vector<std::string> severities{"FATAL", "FATAL", "BENIGN"};
    for (std::size_t i = 0; i < 3; ++i) {
      json d = decision_body(severities[i], "2026-05-0" + std::to_string(i + 1) + "T00:00:00Z");
      d["packet_id"] = decided[i];
      desk.submit(iarp::decision_from_json(d));
    }
    ledger.flush();
  }
  CHECK(slurp(ledger_path) == slurp(twin));

  // Restart: state comes back from the ledger.
  LiveServer again(service_options(cfg, ledger_path));
  const json m = json::parse(again.client().Get("/metrics")->body);
  CHECK(std::abs(m["gamma"].get<double>() - 1.089) < 1e-12);
  CHECK(m["pending_count"] == humans - 3);
}

TEST_CASE("service bearer token and busy port") {
  ScratchDir dir("svc_auth");
  const auto cfg = small_config(dir.path().string());
  auto opts = service_options(cfg, dir.file("ledger.jsonl"));
  opts.bearer_token = "s3cret";
  LiveServer server(opts);
  auto c = server.client();
  auto res = c.Get("/queue");
  REQUIRE(res);
  CHECK(res->status == 401);
  c.set_bearer_token_auth("s3cret");
  res = c.Get("/queue");
  CHECK(res->status == 200);

  service::ArbitrationServer clash(service_options(cfg, dir.file("other.jsonl")));
  CHECK_THROWS_AS(clash.bind("127.0.0.1", server.port()), UnavailableError);
}
