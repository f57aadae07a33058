#include "geoprobe/service.hpp"

#include <sys/socket.h>

#include "geoprobe/errors.hpp"
#include "geoprobe/report.hpp"
#include "httplib.h"

namespace geoprobe::service {

using nlohmann::json;

namespace {

Response error_response(int status, const Error& e) {
  return {status, json{{"error", to_string(e.kind())}, {"message", e.what()}}};
}

int status_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kType:
    case ErrorKind::kDomain: return 400;
    default: return 500;
  }
}

}  // namespace

ArbitrationApi::ArbitrationApi(ServiceOptions options)
    : options_(std::move(options)), ledger_(iarp::Ledger::open(options_.ledger_path)) {
  if (!options_.g_true) throw DomainError("service needs the ground-truth graph");
  desk_ = std::make_unique<iarp::ArbitrationDesk>(ledger_, options_.model, options_.eta);
}

Response ArbitrationApi::queue() const {
  std::lock_guard lock(mu_);
  json items = json::array();
  for (const auto& item : desk_->pending()) {
    const json& rec = desk_->evaluation(item.packet_id);
    const json& r = rec.at("result");
    items.push_back(json{{"evaluation_seq", item.evaluation_seq},
                         {"packet_id", item.packet_id},
                         {"timestamp", rec.at("packet").at("timestamp")},
                         {"t", rec.at("packet").at("t")},
                         {"isomorphism_score", r.at("isomorphism_score")},
                         {"entropy_estimate", r.at("entropy_estimate")},
                         {"anomaly_reason", r.at("anomaly_reason")},
                         {"route_decision", r.at("route_decision")}});
  }
  return {200, std::move(items)};
}

Response ArbitrationApi::packet(const std::string& packet_id) const {
  std::lock_guard lock(mu_);
  try {
    const json& rec = desk_->evaluation(packet_id);
    const auto result = iarp::result_from_json(rec.at("result"));
    const json* decision = desk_->decision(packet_id);
    return {200, json{{"evaluation", rec},
                      {"g_true", graph::graph_to_json(options_.g_true->graph)},
                      {"diff", report::graph_diff(options_.g_true->graph, result.g_gen)},
                      {"decision", decision != nullptr ? *decision : json(nullptr)}}};
  } catch (const Error& e) {
    return error_response(status_for(e), e);
  }
}

Response ArbitrationApi::decide(const std::string& packet_id, const std::string& body) {
  try {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ParseError("decision body is not JSON");
    if (!doc.is_object()) throw ParseError("decision body must be a JSON object");
    if (!doc.contains("packet_id")) doc["packet_id"] = packet_id;
    if (doc["packet_id"] != packet_id)
      throw DomainError("body packet_id does not match the request path");
    if (!doc.contains("decided_at") && options_.now) doc["decided_at"] = options_.now();
    const auto decision = iarp::decision_from_json(doc);

    std::lock_guard lock(mu_);
    const auto out = desk_->submit(decision);
    return {200, json{{"packet_id", packet_id},
                      {"decision_seq", out.decision_seq},
                      {"gamma_before", out.gamma_before},
                      {"gamma_after", out.gamma_after},
                      {"pending_count", desk_->pending_count()}}};
  } catch (const Error& e) {
    return error_response(status_for(e), e);
  }
}

Response ArbitrationApi::metrics() const {
  std::lock_guard lock(mu_);
  std::size_t decisions = 0;
  for (const auto& rec : ledger_.records()) decisions += rec.at("kind") == "decision";
  return {200, json{{"route_histogram", report::route_histogram(ledger_)},
                    {"gamma", desk_->model().gamma},
                    {"eta", desk_->eta()},
                    {"pending_count", desk_->pending_count()},
                    {"decisions", decisions},
                    {"ledger_records", ledger_.size()}}};
}

bool ArbitrationApi::authorized(const std::string& header) const {
  if (!options_.bearer_token) return true;
  return header == "Bearer " + *options_.bearer_token;
}

void ArbitrationApi::flush() {
  std::lock_guard lock(mu_);
  ledger_.flush();
}

struct ArbitrationServer::Impl {
  ArbitrationApi api;
  httplib::Server server;

  explicit Impl(ServiceOptions options) : api(std::move(options)) {}

  void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    // The library default adds SO_REUSEPORT, which would let a second
    // server share a busy port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (api.authorized(req.get_header_value("Authorization")))
        return httplib::Server::HandlerResponse::Unhandled;
      res.status = 401;
      res.set_content(R"({"error":"unauthorized"})", "application/json");
      return httplib::Server::HandlerResponse::Handled;
    });
    server.Get("/queue", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, api.queue());
    });
    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, api.metrics());
    });
    server.Post(R"(/packets/(.+)/decision)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, api.decide(req.matches[1].str(),
                                        req.body));
                });
    server.Get(R"(/packets/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, api.packet(req.matches[1].str()));
    });
  }
};

ArbitrationServer::ArbitrationServer(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->routes();
}

ArbitrationServer::~ArbitrationServer() { stop(); }

int ArbitrationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw UnavailableError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ArbitrationServer::listen() { impl_->server.listen_after_bind(); }

void ArbitrationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  impl_->api.flush();
}

ArbitrationApi& ArbitrationServer::api() noexcept { return impl_->api; }

}  // namespace geoprobe::service
