#pragma once

// Command bodies behind the geoprobe executable, callable from tests.

#include <optional>
#include <string>

#include "geoprobe/config.hpp"
#include "geoprobe/dah.hpp"
#include "geoprobe/errors.hpp"
#include "json.hpp"

namespace geoprobe::commands {

// Process exit codes. Stable; documented in the README.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // anything not listed below
  kExitUsage = 2,        // bad command line or configuration
  kExitDenied = 3,       // handoff receipt DENIED
  kExitInfeasible = 4,   // no portfolio meets the constraints
  kExitSchema = 5,       // malformed input document
  kExitRouting = 6,      // no agent for the execution vector
  kExitModel = 7,        // invalid market model
  kExitUnavailable = 8,  // port busy, engine unreachable
  kExitNotFound = 9,     // missing input file
};

int exit_code_for(const Error& e) noexcept;

inline constexpr const char* kBrokerKeyEnv = "GEOPROBE_BROKER_KEY";

struct ProbeOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> replay_path;
  std::optional<unsigned> workers;
  // Wall-clock stamp for the report's generated_at field.
  std::string generated_at;
};

struct ProbeOutcome {
  std::string ledger_path;
  std::string report_path;
  std::string decay_series_path;
  nlohmann::json report;
};

// Runs the campaign and writes ledger.jsonl, report.json and
// decay_series.csv under the output directory (created if needed). An
// existing ledger there is replaced.
ProbeOutcome run_probe(config::CampaignConfig cfg, const ProbeOptions& options);

struct HandoffOptions {
  std::string tensor_path;
  std::string market_path;
  std::optional<std::string> supply_chain_path;
  std::string key;
  UnixSeconds now = 0;
};

struct HandoffOutcome {
  int exit_code = kExitOk;
  dah::ExecutionReceipt receipt;
};

// Parses the inputs, registers the portfolio agent and hands the tensor
// off once. Library errors propagate; map them with exit_code_for.
HandoffOutcome run_handoff(const HandoffOptions& options);

// Reads a whole file; NotFoundError when it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace geoprobe::commands
