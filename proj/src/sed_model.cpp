#include "geoprobe/sed_model.hpp"

#include <cmath>
#include <string>

#include "geoprobe/errors.hpp"

namespace geoprobe::sed {

void DecayParams::validate() const {
  if (!(c0 > 0.0 && c0 <= 1.0)) throw DomainError("c0 must be in (0,1]");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("lambda must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0,1)");
  if (vocab_size < 2) throw DomainError("vocab_size must be at least 2");
}

double DecayParams::log_vocab() const { return std::log(static_cast<double>(vocab_size)); }

void EntropyTrajectory::validate(const DecayParams& params) const {
  if (!(h_max >= 0.0)) throw DomainError("h_max must be nonnegative");
  // Allow the cap itself to be passed as log(|V|) computed elsewhere.
  if (h_max > params.log_vocab() * (1.0 + 1e-12))
    throw DomainError("h_max must not exceed log(vocab_size)");
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw DomainError("rho must be nonnegative");
}

double EntropyTrajectory::at(double t) const { return h_max * -std::expm1(-rho * t); }

double EntropyTrajectory::rate(double t) const { return h_max * rho * std::exp(-rho * t); }

void TokenDistribution::validate() const {
  if (probs.empty()) throw DomainError("distribution has no outcomes");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("probabilities do not sum to 1");
}

double baseline_confidence(std::span<const double> step_probs) {
  if (step_probs.empty()) throw DomainError("baseline confidence needs at least one token");
  double product = 1.0;
  for (double p : step_probs) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("token probability must be in (0,1]");
    product *= p;
  }
  return product;
}

double conditional_entropy(const TokenDistribution& dist) {
  dist.validate();
  double h = 0.0;
  for (double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace {
void check_inputs(const DecayParams& params, const EntropyTrajectory& traj, double t) {
  params.validate();
  traj.validate(params);
  if (!(t >= 0.0)) throw DomainError("t must be nonnegative");
}
}  // namespace

double entropy_penalty(const DecayParams& params, const EntropyTrajectory& traj,
                       double t) {
  check_inputs(params, traj, t);
  const double ratio = std::min(traj.at(t) / params.log_vocab(), 1.0);
  return 1.0 - params.alpha * ratio;
}

double confidence_at(const DecayParams& params, const EntropyTrajectory& traj,
                     double t) {
  return params.c0 * std::exp(-params.lambda * t) * entropy_penalty(params, traj, t);
}

double decay_derivative(const DecayParams& params, const EntropyTrajectory& traj,
                        double t) {
  const double penalty = entropy_penalty(params, traj, t);
  const double bracket =
      params.lambda * penalty + params.alpha / params.log_vocab() * traj.rate(t);
  return -params.c0 * std::exp(-params.lambda * t) * bracket;
}

double fit_lambda(std::span<const DecaySample> samples) {
  if (samples.size() < 3) throw DomainError("fit_lambda needs at least 3 samples");
  double mean_t = 0.0;
  double mean_y = 0.0;
  for (const auto& s : samples) {
    if (!(s.mean_score > 0.0)) throw DomainError("fit_lambda needs positive scores");
    mean_t += s.t;
    mean_y += std::log(s.mean_score);
  }
  const double n = static_cast<double>(samples.size());
  mean_t /= n;
  mean_y /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double dt = s.t - mean_t;
    sxx += dt * dt;
    sxy += dt * (std::log(s.mean_score) - mean_y);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_lambda needs distinct t values");
  return -sxy / sxx;
}

}  // namespace geoprobe::sed
