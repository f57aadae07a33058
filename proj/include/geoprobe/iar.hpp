#pragma once

// Isomorphic attribution regression: a logistic model of hallucination-free
// attribution whose logit is penalised by graph edit distance,
//
//   P = sigmoid(beta0 + sum_i beta_i * x_i - gamma * GED).
//
// The betas are fit by gradient descent on verified observations; gamma is
// held fixed during fitting and only moves through human arbitration.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace geoprobe::iar {

using FeatureVector = std::vector<double>;

std::vector<std::string> default_feature_schema();

enum class Severity { kBenign, kPartial, kFatal };

const char* to_string(Severity s) noexcept;
// Throws DomainError on anything but BENIGN, PARTIAL or FATAL.
Severity severity_from_string(const std::string& s);

struct GammaUpdate {
  std::string packet_id;
  Severity severity = Severity::kPartial;
  double gamma_before = 0.0;
  double gamma_after = 0.0;

  bool operator==(const GammaUpdate&) const = default;
};

struct IarModel {
  double beta0 = 0.0;
  std::vector<double> betas;
  double gamma = 0.0;
  std::vector<std::string> feature_schema;
  std::vector<GammaUpdate> history;

  // betas.size() == feature_schema.size() and gamma >= 0.
  void validate() const;
  static IarModel zeros(std::vector<std::string> schema, double gamma);

  bool operator==(const IarModel&) const = default;
};

struct LabeledObservation {
  FeatureVector features;
  double ged_normalized = 0.0;
  bool label = false;
};

double sigmoid(double z);

double logit(const IarModel& model, std::span<const double> features, double ged);
double predict(const IarModel& model, std::span<const double> features, double ged);

// Mean binary cross-entropy.
double log_loss(const IarModel& model, std::span<const LabeledObservation> observations);

// Gradient of log_loss over (beta0, beta_1..beta_n).
std::vector<double> gradient(const IarModel& model,
                             std::span<const LabeledObservation> observations);

struct FitConfig {
  double step_size = 0.1;
  // Multiplier applied to the step after every accepted iteration.
  double step_growth = 1.05;
  std::size_t max_iterations = 50000;
  double tolerance = 1e-8;
  // Consecutive loss increases tolerated before the fit is declared divergent.
  std::size_t divergence_patience = 10;
};

struct FitResult {
  IarModel model;
  std::size_t iterations = 0;
  double loss = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  // Loss after each accepted iteration, starting with the initial loss.
  std::vector<double> loss_trace;
};

// Full-batch gradient descent from `initial` with a "bold driver" step: the
// step grows by `step_growth` after each accepted iteration and halves when a
// step would raise the loss (that step is rejected). `divergence_patience`
// rejections in a row throw FitFailure.
FitResult fit(const IarModel& initial, std::span<const LabeledObservation> observations,
              const FitConfig& config = {});

// Severity-driven multiplicative gamma update:
//   FATAL   gamma * (1 + eta)
//   PARTIAL unchanged
//   BENIGN  gamma * max(1 - eta, 0.5)
// The update is appended to the model history.
IarModel calibrate_gamma(const IarModel& model, Severity severity, double eta,
                         const std::string& packet_id = {});

nlohmann::json model_to_json(const IarModel& model);
IarModel model_from_json(const nlohmann::json& doc);

}  // namespace geoprobe::iar
