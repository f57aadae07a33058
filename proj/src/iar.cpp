#include "geoprobe/iar.hpp"

#include <algorithm>
#include <cmath>

#include "geoprobe/errors.hpp"

namespace geoprobe::iar {

using nlohmann::json;

std::vector<std::string> default_feature_schema() {
  return {"semantic_alignment", "schema_injection_density", "domain_authority"};
}

const char* to_string(Severity s) noexcept {
  switch (s) {
    case Severity::kBenign: return "BENIGN";
    case Severity::kPartial: return "PARTIAL";
    case Severity::kFatal: return "FATAL";
  }
  return "PARTIAL";
}

Severity severity_from_string(const std::string& s) {
  if (s == "BENIGN") return Severity::kBenign;
  if (s == "PARTIAL") return Severity::kPartial;
  if (s == "FATAL") return Severity::kFatal;
  throw DomainError("unknown severity '" + s + "'");
}

void IarModel::validate() const {
  if (betas.size() != feature_schema.size())
    throw DomainError("model has " + std::to_string(betas.size()) + " weights for " +
                      std::to_string(feature_schema.size()) + " features");
  if (!(gamma >= 0.0)) throw DomainError("gamma must be nonnegative");
}

IarModel IarModel::zeros(std::vector<std::string> schema, double gamma) {
  IarModel m;
  m.betas.assign(schema.size(), 0.0);
  m.feature_schema = std::move(schema);
  m.gamma = gamma;
  m.validate();
  return m;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(const IarModel& model, std::span<const double> features, double ged) {
  if (features.size() != model.betas.size())
    throw DomainError("feature vector has " + std::to_string(features.size()) +
                      " entries, model expects " + std::to_string(model.betas.size()));
  double z = model.beta0 - model.gamma * ged;
  for (std::size_t i = 0; i < features.size(); ++i) z += model.betas[i] * features[i];
  return z;
}

double predict(const IarModel& model, std::span<const double> features, double ged) {
  return sigmoid(logit(model, features, ged));
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void require_nonempty(std::span<const LabeledObservation> observations) {
  if (observations.empty()) throw DomainError("no observations");
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::pair<double, std::vector<double>> loss_and_gradient(
    const IarModel& model, std::span<const LabeledObservation> observations) {
  std::vector<double> g(model.betas.size() + 1, 0.0);
  double total = 0.0;
  for (const auto& o : observations) {
    const double z = logit(model, o.features, o.ged_normalized);
    const double y = o.label ? 1.0 : 0.0;
    total += softplus(z) - y * z;
    const double residual = sigmoid(z) - y;
    g[0] += residual;
    for (std::size_t i = 0; i < o.features.size(); ++i) g[i + 1] += residual * o.features[i];
  }
  const double n = static_cast<double>(observations.size());
  for (double& x : g) x /= n;
  return {total / n, std::move(g)};
}

}  // namespace

double log_loss(const IarModel& model, std::span<const LabeledObservation> observations) {
  require_nonempty(observations);
  double total = 0.0;
  for (const auto& o : observations) {
    const double z = logit(model, o.features, o.ged_normalized);
    total += softplus(z) - (o.label ? z : 0.0);
  }
  return total / static_cast<double>(observations.size());
}

std::vector<double> gradient(const IarModel& model,
                             std::span<const LabeledObservation> observations) {
  require_nonempty(observations);
  std::vector<double> g(model.betas.size() + 1, 0.0);
  for (const auto& o : observations) {
    const double residual =
        sigmoid(logit(model, o.features, o.ged_normalized)) - (o.label ? 1.0 : 0.0);
    g[0] += residual;
    for (std::size_t i = 0; i < o.features.size(); ++i) g[i + 1] += residual * o.features[i];
  }
  const double n = static_cast<double>(observations.size());
  for (double& x : g) x /= n;
  return g;
}

FitResult fit(const IarModel& initial, std::span<const LabeledObservation> observations,
              const FitConfig& config) {
  initial.validate();
  require_nonempty(observations);
  if (!(config.step_size > 0.0)) throw DomainError("step size must be positive");
  if (!(config.step_growth >= 1.0)) throw DomainError("step growth must be at least 1");

  FitResult result;
  result.model = initial;
  auto [loss0, g] = loss_and_gradient(initial, observations);
  result.loss = loss0;
  result.gradient_norm = norm(g);
  result.loss_trace.push_back(result.loss);

  double step = config.step_size;
  std::size_t rejected = 0;
  while (result.iterations < config.max_iterations) {
    if (result.gradient_norm < config.tolerance) break;
    ++result.iterations;
    IarModel candidate = result.model;
    candidate.beta0 -= step * g[0];
    for (std::size_t i = 0; i < candidate.betas.size(); ++i) candidate.betas[i] -= step * g[i + 1];
    auto [loss, next_g] = loss_and_gradient(candidate, observations);
    if (!(loss <= result.loss)) {
      if (++rejected >= config.divergence_patience)
        throw FitFailure("log loss increased for " + std::to_string(rejected) +
                         " consecutive iterations");
      step *= 0.5;
      continue;
    }
    rejected = 0;
    step *= config.step_growth;
    result.model = std::move(candidate);
    result.loss = loss;
    result.loss_trace.push_back(loss);
    g = std::move(next_g);
    result.gradient_norm = norm(g);
  }
  result.converged = result.gradient_norm < config.tolerance;
  return result;
}

IarModel calibrate_gamma(const IarModel& model, Severity severity, double eta,
                         const std::string& packet_id) {
  if (!(eta >= 0.0)) throw DomainError("eta must be nonnegative");
  IarModel out = model;
  switch (severity) {
    case Severity::kFatal: out.gamma = model.gamma * (1.0 + eta); break;
    case Severity::kPartial: break;
    case Severity::kBenign: out.gamma = model.gamma * std::max(1.0 - eta, 0.5); break;
  }
  out.history.push_back({packet_id, severity, model.gamma, out.gamma});
  return out;
}

json model_to_json(const IarModel& model) {
  json history = json::array();
  for (const auto& h : model.history) {
    history.push_back({{"packet_id", h.packet_id},
                       {"severity", to_string(h.severity)},
                       {"gamma_before", h.gamma_before},
                       {"gamma_after", h.gamma_after}});
  }
  return json{{"intercept", model.beta0},       {"weights", model.betas},
              {"gamma", model.gamma},          {"feature_schema", model.feature_schema},
              {"update_history", std::move(history)}};
}

IarModel model_from_json(const json& doc) {
  IarModel m;
  try {
    m.beta0 = doc.at("intercept").get<double>();
    m.betas = doc.at("weights").get<std::vector<double>>();
    m.gamma = doc.at("gamma").get<double>();
    m.feature_schema = doc.at("feature_schema").get<std::vector<std::string>>();
    if (auto it = doc.find("update_history"); it != doc.end()) {
      for (const auto& h : *it) {
        m.history.push_back({h.at("packet_id").get<std::string>(),
                             severity_from_string(h.at("severity").get<std::string>()),
                             h.at("gamma_before").get<double>(),
                             h.at("gamma_after").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid model document: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace geoprobe::iar
