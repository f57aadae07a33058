#include "geoprobe/dah.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "geoprobe/crypto.hpp"
#include "geoprobe/errors.hpp"

namespace geoprobe::dah {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Wraps an object and tracks which keys were read so leftovers can be
// reported.
class Reader {
 public:
  Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw TypeError(path_.empty() ? "<root>" : path_, "an object");
  }

  const json& at(const std::string& key) {
    auto it = doc_.find(key);
    if (it == doc_.end()) throw SchemaError(join(path_, key));
    seen_.insert(key);
    return *it;
  }
  std::string str(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) throw TypeError(join(path_, key), "a string");
    return v.get<std::string>();
  }
  double num(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) throw TypeError(join(path_, key), "a number");
    return v.get<double>();
  }
  std::int64_t integer(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_integer()) throw TypeError(join(path_, key), "an integer");
    return v.get<std::int64_t>();
  }
  std::vector<std::string> strings(const std::string& key) {
    const json& v = at(key);
    if (!v.is_array()) throw TypeError(join(path_, key), "an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string())
        throw TypeError(join(path_, key) + "[" + std::to_string(i) + "]", "a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }
  Reader object(const std::string& key) { return Reader(at(key), join(path_, key)); }
  const std::string& path() const { return path_; }

  // Every key must have been consumed.
  void finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!seen_.count(k))
        throw SchemaError(join(path_, k), "unexpected key '" + join(path_, k) + "'");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void require_range(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

std::int64_t dollars_to_cents(double dollars, const std::string& key) {
  const double cents = dollars * 100.0;
  const double rounded = std::round(cents);
  require_range(std::isfinite(cents) && std::abs(cents - rounded) <= 1e-6 * std::max(1.0, std::abs(cents)),
                key + " must be a whole number of cents");
  return static_cast<std::int64_t>(rounded);
}

bool valid_lei(const std::string& s) {
  return s.size() == 20 && std::all_of(s.begin(), s.end(), [](unsigned char c) {
           return std::isdigit(c) || std::isupper(c);
         });
}

}  // namespace

IntentStateTensor parse_tensor(const json& doc) {
  Reader root(doc, "");
  IntentStateTensor t;
  t.protocol_version = root.str("protocol_version");
  if (t.protocol_version != kProtocolVersion)
    throw VersionError("unsupported protocol_version '" + t.protocol_version + "'");
  t.tensor_id = root.str("tensor_id");
  require_range(!t.tensor_id.empty(), "tensor_id must not be empty");
  t.timestamp = root.str("timestamp");
  parse_utc(t.timestamp);

  {
    Reader u = root.object("u_auth");
    t.u_auth.user_id = u.str("user_id");
    t.u_auth.session_token = u.str("session_token");
    t.u_auth.atomic_permissions = u.strings("atomic_permissions");
    std::set<std::string> uniq(t.u_auth.atomic_permissions.begin(),
                               t.u_auth.atomic_permissions.end());
    require_range(uniq.size() == t.u_auth.atomic_permissions.size(),
                  "u_auth.atomic_permissions has duplicates");
    t.u_auth.cryptographic_signature = u.str("cryptographic_signature");
    t.u_auth.expiration_window_seconds = u.integer("expiration_window_seconds");
    require_range(t.u_auth.expiration_window_seconds > 0,
                  "u_auth.expiration_window_seconds must be positive");
    u.finish();
  }
  {
    Reader c = root.object("c_context");
    t.c_context.session_depth = c.integer("session_depth");
    require_range(t.c_context.session_depth >= 0, "c_context.session_depth must be >= 0");
    t.c_context.semantic_history_vectors = c.strings("semantic_history_vectors");
    Reader prefs = c.object("user_preference_profile");
    for (const auto& [k, v] : c.at("user_preference_profile").items()) {
      if (!v.is_string()) throw TypeError(join(prefs.path(), k), "a string");
      t.c_context.user_preference_profile[k] = v.get<std::string>();
    }
    c.finish();
  }
  {
    Reader p = root.object("p_params");
    Reader te = p.object("target_entity");
    t.p_params.target_entity.entity_name = te.str("entity_name");
    t.p_params.target_entity.lei_code = te.str("lei_code");
    require_range(valid_lei(t.p_params.target_entity.lei_code),
                  "p_params.target_entity.lei_code must be 20 uppercase alphanumerics");
    t.p_params.target_entity.resolution_confidence = te.num("resolution_confidence");
    const double rc = t.p_params.target_entity.resolution_confidence;
    require_range(rc >= 0.0 && rc <= 1.0,
                  "p_params.target_entity.resolution_confidence must be in [0,1]");
    te.finish();

    t.p_params.execution_vector = p.str("execution_vector");
    Reader sc = p.object("strict_constraints");
    auto& k = t.p_params.strict_constraints;
    k.portfolio_value_cents = dollars_to_cents(sc.num("portfolio_value_usd"),
                                               "p_params.strict_constraints.portfolio_value_usd");
    require_range(k.portfolio_value_cents > 0,
                  "p_params.strict_constraints.portfolio_value_usd must be positive");
    k.target_annualized_yield = sc.num("target_annualized_yield");
    require_range(std::abs(k.target_annualized_yield) <= 1.0,
                  "p_params.strict_constraints.target_annualized_yield must be a decimal fraction");
    k.max_asset_turnover_ratio = sc.num("max_asset_turnover_ratio");
    require_range(k.max_asset_turnover_ratio >= 0.0 && k.max_asset_turnover_ratio <= 1.0,
                  "p_params.strict_constraints.max_asset_turnover_ratio must be in [0,1]");
    k.rebalancing_algorithm = sc.str("rebalancing_algorithm");
    sc.finish();
    t.p_params.expected_output_modalities = p.strings("expected_output_modalities");
    p.finish();
  }
  root.finish();
  return t;
}

IntentStateTensor parse_tensor(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError("tensor is not valid JSON");
  return parse_tensor(doc);
}

json tensor_to_json(const IntentStateTensor& t) {
  const auto& k = t.p_params.strict_constraints;
  const auto& te = t.p_params.target_entity;
  return json{
      {"protocol_version", t.protocol_version},
      {"tensor_id", t.tensor_id},
      {"timestamp", t.timestamp},
      {"u_auth",
       {{"user_id", t.u_auth.user_id},
        {"session_token", t.u_auth.session_token},
        {"atomic_permissions", t.u_auth.atomic_permissions},
        {"cryptographic_signature", t.u_auth.cryptographic_signature},
        {"expiration_window_seconds", t.u_auth.expiration_window_seconds}}},
      {"c_context",
       {{"session_depth", t.c_context.session_depth},
        {"semantic_history_vectors", t.c_context.semantic_history_vectors},
        {"user_preference_profile", t.c_context.user_preference_profile}}},
      {"p_params",
       {{"target_entity",
         {{"entity_name", te.entity_name},
          {"lei_code", te.lei_code},
          {"resolution_confidence", te.resolution_confidence}}},
        {"execution_vector", t.p_params.execution_vector},
        {"strict_constraints",
         {{"portfolio_value_usd", static_cast<double>(k.portfolio_value_cents) / 100.0},
          {"target_annualized_yield", k.target_annualized_yield},
          {"max_asset_turnover_ratio", k.max_asset_turnover_ratio},
          {"rebalancing_algorithm", k.rebalancing_algorithm}}},
        {"expected_output_modalities", t.p_params.expected_output_modalities}}}};
}

std::string canonical(const IntentStateTensor& t) { return tensor_to_json(t).dump(); }

std::string signing_body(const IntentStateTensor& t) {
  json doc = tensor_to_json(t);
  doc["u_auth"].erase("cryptographic_signature");
  return doc.dump();
}

std::string compute_signature(const IntentStateTensor& t, std::string_view key) {
  return "0x" + crypto::hmac_sha256_hex(key, signing_body(t));
}

IntentStateTensor sign(IntentStateTensor t, std::string_view key) {
  t.u_auth.cryptographic_signature = compute_signature(t, key);
  return t;
}

const char* to_string(DenyReason r) noexcept {
  switch (r) {
    case DenyReason::kNone: return "NONE";
    case DenyReason::kBadSignature: return "BAD_SIGNATURE";
    case DenyReason::kExpired: return "EXPIRED";
    case DenyReason::kOutOfScope: return "OUT_OF_SCOPE";
    case DenyReason::kReplay: return "REPLAY";
  }
  return "?";
}

AuthDecision authorize(const IntentStateTensor& t, std::string_view action, UnixSeconds now,
                       std::string_view key) {
  if (!crypto::digest_equal(t.u_auth.cryptographic_signature, compute_signature(t, key)))
    return {false, DenyReason::kBadSignature};
  UnixSeconds issued;
  try {
    issued = t.issued_at();
  } catch (const ParseError&) {
    return {false, DenyReason::kBadSignature};
  }
  if (!(now < issued + t.u_auth.expiration_window_seconds)) return {false, DenyReason::kExpired};
  const auto& scopes = t.u_auth.atomic_permissions;
  if (std::find(scopes.begin(), scopes.end(), action) == scopes.end())
    return {false, DenyReason::kOutOfScope};
  return {true, DenyReason::kNone};
}

// Market model

void MarketModel::validate() const {
  const auto n = static_cast<Eigen::Index>(assets.size());
  if (n == 0) throw ModelError("market has no assets");
  if (expected_returns.size() != n) throw ModelError("expected_returns length mismatch");
  if (covariance.rows() != n || covariance.cols() != n)
    throw ModelError("covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  if (!expected_returns.allFinite() || !covariance.allFinite())
    throw ModelError("market contains non-finite values");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(covariance(i, j) - covariance(j, i)) > 1e-12)
        throw ModelError("covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ModelError("covariance is not positive definite");
  if (!current_weights.empty()) {
    if (current_weights.size() != assets.size())
      throw ModelError("current_weights length mismatch");
    double s = 0;
    for (double w : current_weights) s += w;
    if (std::abs(s - 1.0) > 1e-9) throw ModelError("current_weights must sum to 1");
  }
  std::set<std::string> uniq(assets.begin(), assets.end());
  if (uniq.size() != assets.size()) throw ModelError("duplicate asset names");
}

MarketModel parse_market(const json& doc) {
  Reader r(doc, "");
  MarketModel m;
  m.assets = r.strings("assets");
  const auto n = static_cast<Eigen::Index>(m.assets.size());
  const json& mu = r.at("expected_returns");
  if (!mu.is_array()) throw TypeError("expected_returns", "an array of numbers");
  m.expected_returns.resize(static_cast<Eigen::Index>(mu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!mu[i].is_number()) throw TypeError("expected_returns", "an array of numbers");
    m.expected_returns(static_cast<Eigen::Index>(i)) = mu[i].get<double>();
  }
  const json& cov = r.at("covariance");
  if (!cov.is_array() || static_cast<Eigen::Index>(cov.size()) != n)
    throw ModelError("covariance must have one row per asset");
  m.covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = cov[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw ModelError("covariance row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!row[static_cast<std::size_t>(j)].is_number())
        throw TypeError("covariance", "a matrix of numbers");
      m.covariance(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
  }
  if (doc.contains("current_weights")) {
    const json& cw = r.at("current_weights");
    if (!cw.is_array()) throw TypeError("current_weights", "an array of numbers");
    for (const auto& w : cw) {
      if (!w.is_number()) throw TypeError("current_weights", "an array of numbers");
      m.current_weights.push_back(w.get<double>());
    }
  }
  r.finish();
  m.validate();
  return m;
}

json market_to_json(const MarketModel& m) {
  json cov = json::array();
  for (Eigen::Index i = 0; i < m.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.covariance.cols(); ++j) row.push_back(m.covariance(i, j));
    cov.push_back(std::move(row));
  }
  json mu = json::array();
  for (Eigen::Index i = 0; i < m.expected_returns.size(); ++i) mu.push_back(m.expected_returns(i));
  json out{{"assets", m.assets}, {"expected_returns", std::move(mu)}, {"covariance", std::move(cov)}};
  if (!m.current_weights.empty()) out["current_weights"] = m.current_weights;
  return out;
}

Eigen::VectorXd mvo_solve(const MarketModel& market, double target, double budget) {
  market.validate();
  const Eigen::VectorXd& mu = market.expected_returns;
  const Eigen::Index n = mu.size();
  const double lo = mu.minCoeff(), hi = mu.maxCoeff();
  if (!std::isfinite(target) || target < lo || target > hi)
    throw InfeasibleError("target yield outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");

  // Stationarity of w'Sw - a(mu'w - target) - b(1'w - budget) gives
  // w = S^-1 (a mu + b 1) / 2; the two constraints fix a and b.
  Eigen::LLT<Eigen::MatrixXd> llt(market.covariance);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd s_mu = llt.solve(mu);
  const Eigen::VectorXd s_one = llt.solve(ones);
  const double A = mu.dot(s_mu), B = mu.dot(s_one), C = ones.dot(s_one);
  const double D = A * C - B * B;

  Eigen::VectorXd w;
  const double spread = hi - lo;
  if (spread <= 1e-12 * std::max(1.0, std::abs(hi)) || D <= 1e-14 * A * C) {
    // Equal expected returns: only the common mean is attainable.
    if (std::abs(target - B / C) > 1e-12 * std::max(1.0, std::abs(target)))
      throw InfeasibleError("all assets share one expected return; target unattainable");
    w = s_one * (budget / C);
  } else {
    const double a = (C * target - B * budget) / D;
    const double b = (A * budget - B * target) / D;
    w = a * s_mu + b * s_one;
  }
  return w;
}

// Agent context

namespace {

// Thrown by require() to abort an agent run; deliberately not an Error.
struct ActionDenied {
  DenyReason reason;
};

}  // namespace

AgentContext::AgentContext(const IntentStateTensor& tensor, std::string_view key,
                           const Clock& clock)
    : tensor_(tensor), key_(key), clock_(clock) {}

void AgentContext::require(std::string_view action) {
  const UnixSeconds now = clock_();
  const AuthDecision d = authorize(tensor_, action, now, key_);
  audit_.push_back({audit_.size() + 1, std::string(action), d.allowed, d.reason, now});
  if (!d.allowed) throw ActionDenied{d.reason};
}

std::string AgentContext::log(std::string op, json result) {
  std::string id = "c" + std::to_string(computations_.size() + 1);
  computations_.push_back({id, std::move(op), std::move(result)});
  return id;
}

// FinQuant

FinQuantAgent::FinQuantAgent(MarketModel market, graph::KnowledgeGraph supply_chain,
                             std::string execution_vector)
    : market_(std::move(market)),
      supply_chain_(std::move(supply_chain)),
      execution_vector_(std::move(execution_vector)) {
  market_.validate();
  supply_chain_digest_ = crypto::sha256_hex(graph::graph_to_json(supply_chain_).dump());
}

std::vector<std::string> FinQuantAgent::declared_actions() const {
  return {"READ_PORTFOLIO_STATE", "EXECUTE_MVO_SIMULATION"};
}

json FinQuantAgent::run(AgentContext& ctx) const {
  const auto& k = ctx.tensor().p_params.strict_constraints;
  if (k.rebalancing_algorithm != "Mean_Variance_Optimization")
    throw DomainError("unsupported rebalancing_algorithm '" + k.rebalancing_algorithm + "'");

  ctx.require("READ_PORTFOLIO_STATE");
  json state{{"market", market_to_json(market_)},
             {"portfolio_value_cents", k.portfolio_value_cents},
             {"supply_chain", {{"sha256", supply_chain_digest_},
                               {"nodes", supply_chain_.node_count()},
                               {"edges", supply_chain_.edge_count()}}}};
  const std::string state_id = ctx.log("read_portfolio_state", state);

  ctx.require("EXECUTE_MVO_SIMULATION");
  const Eigen::VectorXd w = mvo_solve(market_, k.target_annualized_yield);
  std::vector<double> weights(w.data(), w.data() + w.size());
  const std::string solve_id = ctx.log(
      "mvo_solve", {{"weights", weights}, {"target_annualized_yield", k.target_annualized_yield}});

  const double achieved = market_.expected_returns.dot(w);
  const double variance = w.dot(market_.covariance * w);
  double weight_sum = 0;
  for (double x : weights) weight_sum += x;
  const std::string moments_id = ctx.log(
      "portfolio_moments",
      {{"achieved_yield", achieved}, {"variance", variance}, {"weight_sum", weight_sum}});

  std::vector<std::int64_t> cents;
  for (double x : weights)
    cents.push_back(std::llround(x * static_cast<double>(k.portfolio_value_cents)));
  const std::string alloc_id = ctx.log("allocation", {{"allocations_cents", cents}});

  json payload{
      {"assets", market_.assets},
      {"weights", {{"value", weights}, {"computation_id", solve_id}}},
      {"weight_sum", {{"value", weight_sum}, {"computation_id", moments_id}}},
      {"achieved_yield", {{"value", achieved}, {"computation_id", moments_id}}},
      {"variance", {{"value", variance}, {"computation_id", moments_id}}},
      {"allocations_cents", {{"value", cents}, {"computation_id", alloc_id}}},
      {"portfolio_value_cents", {{"value", k.portfolio_value_cents}, {"computation_id", state_id}}},
      {"supply_chain_graph",
       {{"ref", "supply_chain/" + execution_vector_},
        {"sha256", supply_chain_digest_},
        {"computation_id", state_id}}}};

  if (!market_.current_weights.empty()) {
    double turnover = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      turnover += std::abs(weights[i] - market_.current_weights[i]);
    turnover /= 2.0;
    const bool within = turnover <= k.max_asset_turnover_ratio;
    const std::string turnover_id =
        ctx.log("turnover", {{"turnover", turnover}, {"within_limit", within}});
    payload["turnover"] = {{"value", turnover}, {"computation_id", turnover_id}};
    payload["turnover_within_limit"] = {{"value", within}, {"computation_id", turnover_id}};
  }
  return payload;
}

// Broker

Broker::Broker(std::string key, Clock clock) : key_(std::move(key)), clock_(std::move(clock)) {
  if (key_.empty()) throw ConfigError({"broker key must not be empty"});
  if (!clock_) throw ConfigError({"broker needs a clock"});
}

void Broker::register_agent(std::shared_ptr<const SpecialistAgent> agent) {
  std::lock_guard lock(*mu_);
  const std::string vector = agent->execution_vector();
  if (!registry_.emplace(vector, std::move(agent)).second)
    throw ConflictError("an agent is already registered for '" + vector + "'");
}

namespace {

json audit_to_json(const AuditLine& a) {
  return json{{"seq", a.seq},
              {"action", a.action},
              {"decision", a.allowed ? "ALLOW" : "DENY"},
              {"reason", a.allowed ? json(nullptr) : json(to_string(a.reason))},
              {"at", format_utc(a.at)}};
}

ExecutionReceipt make_receipt(const IntentStateTensor& t, const std::string& agent,
                              const std::vector<AuditLine>& audit,
                              const std::vector<Computation>* computations,
                              const json* result, DenyReason reason) {
  json audit_doc = json::array();
  for (const auto& a : audit) audit_doc.push_back(audit_to_json(a));
  json log = json::array();
  if (computations != nullptr)
    for (const auto& c : *computations)
      log.push_back(json{{"id", c.id}, {"op", c.op}, {"result", c.result}});
  const bool executed = reason == DenyReason::kNone;
  return {json{{"status", executed ? "EXECUTED" : "DENIED"},
               {"reason", executed ? json(nullptr) : json(to_string(reason))},
               {"tensor_id", t.tensor_id},
               {"execution_vector", t.p_params.execution_vector},
               {"agent", agent},
               {"result", executed && result != nullptr ? *result : json(nullptr)},
               {"audit", std::move(audit_doc)},
               {"computation_log", executed ? std::move(log) : json::array()}}};
}

}  // namespace

ExecutionReceipt Broker::handoff(const IntentStateTensor& tensor) {
  std::shared_ptr<const SpecialistAgent> agent;
  {
    std::lock_guard lock(*mu_);
    auto it = registry_.find(tensor.p_params.execution_vector);
    if (it == registry_.end())
      throw RoutingError("no agent registered for '" + tensor.p_params.execution_vector + "'");
    agent = it->second;

    const UnixSeconds now = clock_();
    if (!crypto::digest_equal(tensor.u_auth.cryptographic_signature,
                              compute_signature(tensor, key_))) {
      return make_receipt(tensor, agent->name(),
                          {{1, "HANDOFF", false, DenyReason::kBadSignature, now}}, nullptr,
                          nullptr, DenyReason::kBadSignature);
    }
    if (!seen_tensors_.insert(tensor.tensor_id).second) {
      return make_receipt(tensor, agent->name(), {{1, "HANDOFF", false, DenyReason::kReplay, now}},
                          nullptr, nullptr, DenyReason::kReplay);
    }
  }

  AgentContext ctx(tensor, key_, clock_);
  json result;
  DenyReason reason = DenyReason::kNone;
  try {
    result = agent->run(ctx);
  } catch (const ActionDenied& denied) {
    reason = denied.reason;
  }
  // An agent that swallowed a denial still gets a denied receipt.
  for (const auto& a : ctx.audit())
    if (!a.allowed && reason == DenyReason::kNone) reason = a.reason;
  return make_receipt(tensor, agent->name(), ctx.audit(), &ctx.computations(), &result, reason);
}

}  // namespace geoprobe::dah
