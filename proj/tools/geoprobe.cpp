// geoprobe: campaign runner, agent handoff and arbitration service.
// Exit codes are listed in geoprobe/commands.hpp and the README.

#include <csignal>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "geoprobe/commands.hpp"
#include "geoprobe/config.hpp"
#include "geoprobe/service.hpp"
#include "geoprobe/timeutil.hpp"

using namespace geoprobe;
using nlohmann::json;

namespace {

UnixSeconds wall_clock() { return static_cast<UnixSeconds>(std::time(nullptr)); }

std::string broker_key() {
  const char* key = std::getenv(commands::kBrokerKeyEnv);
  if (key == nullptr || *key == '\0')
    throw ConfigError({std::string(commands::kBrokerKeyEnv) + " is not set"});
  return key;
}

void report_error(const Error& e) {
  std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e))
    for (const auto& v : ce->violations()) std::cerr << "  " << v << "\n";
}

int cmd_probe(const std::string& config_path, const commands::ProbeOptions& options) {
  const auto cfg = config::load_config(config_path);
  const auto out = commands::run_probe(cfg, options);
  const json& r = out.report;
  std::cout << json{{"ledger", out.ledger_path},
                    {"report", out.report_path},
                    {"decay_series", out.decay_series_path},
                    {"total_probes", r.at("total_probes")},
                    {"route_histogram", r.at("route_histogram")},
                    {"lambda_hat", r.at("lambda_hat")},
                    {"gamma_final", r.at("gamma_final")},
                    {"arbitration_mode", r.at("arbitration_mode")}}
                   .dump(2)
            << "\n";
  return commands::kExitOk;
}

int cmd_handoff(commands::HandoffOptions options, const std::string& now) {
  options.key = broker_key();
  options.now = now.empty() ? wall_clock() : parse_utc(now);
  const auto out = commands::run_handoff(options);
  std::cout << out.receipt.doc.dump(2) << "\n";
  return out.exit_code;
}

int cmd_sign(const std::string& tensor_path, const std::string& timestamp) {
  auto tensor = dah::parse_tensor(std::string_view(commands::read_file(tensor_path)));
  if (!timestamp.empty()) {
    parse_utc(timestamp);
    tensor.timestamp = timestamp;
  }
  std::cout << dah::tensor_to_json(dah::sign(tensor, broker_key())).dump(2) << "\n";
  return commands::kExitOk;
}

int cmd_serve(const std::string& config_path, const std::string& host, int port) {
  const auto cfg = config::load_config(config_path);
  std::filesystem::create_directories(cfg.output_dir);

  // Signals are collected by this thread only; worker threads inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::ServiceOptions options;
  options.ledger_path = (std::filesystem::path(cfg.output_dir) / "ledger.jsonl").string();
  options.model = iar::IarModel::zeros(cfg.campaign.feature_schema, cfg.campaign.gamma);
  options.eta = cfg.campaign.eta;
  options.g_true = config::load_ground_truth(cfg);
  options.bearer_token = cfg.bearer_token;
  options.now = [] { return format_utc(wall_clock()); };

  service::ArbitrationServer server(std::move(options));
  const int bound = server.bind(host, port);
  std::cout << "listening on " << host << ":" << bound << std::endl;
  std::thread listener([&] { server.listen(); });
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  listener.join();
  std::cout << "stopped; ledger flushed" << std::endl;
  return commands::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative-engine probing, agent handoff and arbitration service"};
  app.require_subcommand(1);

  std::string config_path;
  commands::ProbeOptions probe;
  std::uint64_t seed = 0;
  std::string out_dir, replay;
  unsigned workers = 1;
  auto* p = app.add_subcommand("probe", "Run a probe campaign and write ledger, report, decay series");
  p->add_option("--config", config_path, "Campaign config file")->required();
  auto* seed_opt = p->add_option("--seed", seed, "Override master_seed");
  auto* out_opt = p->add_option("--out", out_dir, "Override output_dir");
  auto* replay_opt = p->add_option("--replay", replay, "Decision file for headless arbitration");
  auto* workers_opt = p->add_option("--workers", workers, "Probe threads")->check(CLI::Range(1u, 256u));

  commands::HandoffOptions handoff;
  std::string now;
  auto* h = app.add_subcommand("handoff", "Hand an intent tensor to the portfolio agent");
  h->add_option("--tensor", handoff.tensor_path, "Signed intent tensor")->required();
  h->add_option("--market", handoff.market_path, "Market model")->required();
  h->add_option("--supply-chain", handoff.supply_chain_path, "Supply-chain graph document");
  h->add_option("--now", now, "Presentation time, YYYY-MM-DDTHH:MM:SSZ (default: system clock)");

  std::string sign_tensor, sign_timestamp;
  auto* s = app.add_subcommand("sign", "Sign an intent tensor with the broker key");
  s->add_option("--tensor", sign_tensor, "Intent tensor")->required();
  s->add_option("--timestamp", sign_timestamp, "Replace the tensor timestamp before signing");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* v = app.add_subcommand("serve", "Serve the arbitration API over the campaign ledger");
  v->add_option("--config", config_path, "Campaign config file")->required();
  v->add_option("--port", port, "Port (0 picks a free one)")->required()->check(CLI::Range(0, 65535));
  v->add_option("--host", host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : commands::kExitUsage;
  }

  try {
    if (*p) {
      if (*seed_opt) probe.seed = seed;
      if (*out_opt) probe.out_dir = out_dir;
      if (*replay_opt) probe.replay_path = replay;
      if (*workers_opt) probe.workers = workers;
      probe.generated_at = format_utc(wall_clock());
      return cmd_probe(config_path, probe);
    }
    if (*h) return cmd_handoff(handoff, now);
    if (*s) return cmd_sign(sign_tensor, sign_timestamp);
    if (*v) return cmd_serve(config_path, host, port);
  } catch (const Error& e) {
    report_error(e);
    return commands::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return commands::kExitFailure;
  }
  return commands::kExitFailure;
}
