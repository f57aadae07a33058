#pragma once

// Confidence decay under rising conditional entropy.
//
//   C(t) = c0 * exp(-lambda * t) * (1 - alpha * H(t) / log|V|)
//
// with H(t) = h_max * (1 - exp(-rho * t)), a saturating, non-decreasing
// entropy trajectory. All logarithms are natural; entropies are in nats.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace geoprobe::sed {

struct DecayParams {
  double c0 = 1.0;
  double lambda = 0.05;
  double alpha = 0.5;
  std::size_t vocab_size = 32000;

  // Throws DomainError unless c0 in (0,1], lambda > 0, alpha in (0,1),
  // vocab_size >= 2.
  void validate() const;
  double log_vocab() const;
};

struct EntropyTrajectory {
  double h_max = 0.0;
  double rho = 0.0;

  // Throws DomainError unless 0 <= h_max <= log(vocab_size) and rho >= 0.
  void validate(const DecayParams& params) const;

  double at(double t) const;
  double rate(double t) const;
};

struct TokenDistribution {
  std::vector<double> probs;

  // Throws DomainError unless every entry is in [0,1] and they sum to 1
  // within 1e-9.
  void validate() const;
};

// Product of per-step token probabilities. Every entry must be in (0,1].
double baseline_confidence(std::span<const double> step_probs);

// Shannon entropy in nats, with 0*log(0) taken as 0.
double conditional_entropy(const TokenDistribution& dist);

// 1 - alpha * H(t) / log|V|. Bounded to [1 - alpha, 1].
double entropy_penalty(const DecayParams& params, const EntropyTrajectory& traj,
                       double t);

double confidence_at(const DecayParams& params, const EntropyTrajectory& traj,
                     double t);

// Closed-form dC/dt:
//   -c0 * exp(-lambda t) * (lambda * P(t) + alpha / log|V| * H'(t))
double decay_derivative(const DecayParams& params, const EntropyTrajectory& traj,
                        double t);

struct DecaySample {
  double t = 0.0;
  double mean_score = 0.0;
};

// Negated OLS slope of ln(mean_score) against t. Needs at least three
// samples, positive scores, and more than one distinct t.
double fit_lambda(std::span<const DecaySample> samples);

}  // namespace geoprobe::sed
