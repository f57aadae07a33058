#include "geoprobe/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoprobe/iarp.hpp"
#include "geoprobe/oracle.hpp"
#include "geoprobe/report.hpp"

namespace geoprobe::commands {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const Error& e) noexcept {
  switch (e.kind()) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kType:
    case ErrorKind::kVersion:
    case ErrorKind::kDomain: return kExitSchema;
    case ErrorKind::kInfeasible: return kExitInfeasible;
    case ErrorKind::kRouting: return kExitRouting;
    case ErrorKind::kModel: return kExitModel;
    case ErrorKind::kUnavailable: return kExitUnavailable;
    case ErrorKind::kNotFound: return kExitNotFound;
    default: return kExitFailure;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UnavailableError("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw UnavailableError("failed writing " + path.string());
}

json parse_json_text(const std::string& text, const std::string& what) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError(what + " is not valid JSON");
  return doc;
}

}  // namespace

ProbeOutcome run_probe(config::CampaignConfig cfg, const ProbeOptions& options) {
  if (options.seed) cfg.campaign.master_seed = *options.seed;
  if (options.out_dir) cfg.output_dir = *options.out_dir;
  if (options.replay_path) cfg.replay_path = *options.replay_path;
  if (options.workers) cfg.campaign.workers = *options.workers;

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  ProbeOutcome outcome;
  outcome.ledger_path = (out_dir / "ledger.jsonl").string();
  outcome.report_path = (out_dir / "report.json").string();
  outcome.decay_series_path = (out_dir / "decay_series.csv").string();

  const auto replay = cfg.replay_path ? iarp::load_replay(*cfg.replay_path)
                                      : std::vector<iarp::ArbitrationDecision>{};
  const auto g_true = config::load_ground_truth(cfg);
  const oracle::SimulatedEngine engine(config::build_corpus(cfg));

  auto ledger = iarp::Ledger::create(outcome.ledger_path);
  iarp::ArbitrationDesk desk(
      ledger, iar::IarModel::zeros(cfg.campaign.feature_schema, cfg.campaign.gamma),
      cfg.campaign.eta);
  const auto result = iarp::run_campaign(cfg.campaign, engine, g_true, desk, replay);
  ledger.flush();

  outcome.report = report::build_report(cfg, result, ledger, options.generated_at);
  write_file(outcome.report_path, outcome.report.dump(2) + "\n");
  write_file(outcome.decay_series_path,
             report::decay_series_csv(report::decay_series(result.packets, result.results)));
  return outcome;
}

HandoffOutcome run_handoff(const HandoffOptions& options) {
  const auto tensor = dah::parse_tensor(
      parse_json_text(read_file(options.tensor_path), options.tensor_path));
  const auto market =
      dah::parse_market(parse_json_text(read_file(options.market_path), options.market_path));
  graph::KnowledgeGraph supply_chain;
  if (options.supply_chain_path)
    supply_chain = graph::parse_graph_document(parse_json_text(
                                                   read_file(*options.supply_chain_path),
                                                   *options.supply_chain_path))
                       .graph;

  dah::Broker broker(options.key, dah::FixedClock(options.now));
  broker.register_agent(std::make_shared<dah::FinQuantAgent>(market, std::move(supply_chain)));
  HandoffOutcome out;
  out.receipt = broker.handoff(tensor);
  out.exit_code = out.receipt.executed() ? kExitOk : kExitDenied;
  return out;
}

}  // namespace geoprobe::commands
