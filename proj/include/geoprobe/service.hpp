#pragma once

// Arbitration HTTP service over a campaign ledger.
//
//   GET  /queue                    pending HUMAN_ARBITRATION items, oldest first
//   GET  /packets/{id}             evaluation record, ground truth, diff, decision
//   POST /packets/{id}/decision    ArbitrationDecision body; 400 / 404 / 409 on failure
//   GET  /metrics                  route histogram, gamma, pending count
//
// Packet ids contain '/', which clients may send raw or percent-encoded.
// Decisions are serialized through one lock; reads share it.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "geoprobe/iarp.hpp"
#include "json.hpp"

namespace geoprobe::service {

struct Response {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string ledger_path;
  iar::IarModel model;
  double eta = 0.1;
  std::shared_ptr<const graph::GraphDocument> g_true;
  std::optional<std::string> bearer_token;
  // Fills decided_at when a decision body omits it.
  std::function<std::string()> now;
};

// Request handling without the transport. Thread-safe.
class ArbitrationApi {
 public:
  explicit ArbitrationApi(ServiceOptions options);

  Response queue() const;
  Response packet(const std::string& packet_id) const;
  Response decide(const std::string& packet_id, const std::string& body);
  Response metrics() const;
  // True when no token is configured or the header carries "Bearer <token>".
  bool authorized(const std::string& authorization_header) const;
  void flush();

 private:
  ServiceOptions options_;
  iarp::Ledger ledger_;
  std::unique_ptr<iarp::ArbitrationDesk> desk_;
  mutable std::mutex mu_;
};

class ArbitrationServer {
 public:
  explicit ArbitrationServer(ServiceOptions options);
  ~ArbitrationServer();

  // Binds the listening socket; port 0 picks a free one. Returns the bound
  // port. UnavailableError when the port is taken.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  // Stops serving and flushes the ledger. Safe from any thread.
  void stop();

  ArbitrationApi& api() noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace geoprobe::service
