#pragma once

// Synthetic observations drawn from a known IAR model. Binary features sit
// at the corners of their [0,1] domain and schema density takes {0,1,2},
// a factorial layout that keeps the weight estimates well conditioned.

#include <vector>

#include "geoprobe/iar.hpp"
#include "test_support.hpp"

namespace geoprobe::testing {

inline iar::IarModel planted_model() {
  iar::IarModel m = iar::IarModel::zeros(iar::default_feature_schema(), 2.0);
  m.beta0 = 0.5;
  m.betas = {1.0, -1.0, 0.7};
  return m;
}

inline std::vector<iar::LabeledObservation> planted_observations(const iar::IarModel& truth,
                                                                 std::size_t n,
                                                                 std::uint64_t seed) {
  Draw d(seed);
  std::vector<iar::LabeledObservation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    iar::LabeledObservation o;
    o.features = {static_cast<double>(d.below(2)), static_cast<double>(d.below(3)),
                  static_cast<double>(d.below(2))};
    o.ged_normalized = d.uniform(0.0, 1.0);
    o.label = d.uniform(0.0, 1.0) < iar::predict(truth, o.features, o.ged_normalized);
    out.push_back(std::move(o));
  }
  return out;
}

// Central finite differences of log_loss over (beta0, betas).
inline std::vector<double> fd_gradient(const iar::IarModel& m,
                                       const std::vector<iar::LabeledObservation>& obs,
                                       double h = 1e-5) {
  std::vector<double> g(m.betas.size() + 1);
  for (std::size_t k = 0; k < g.size(); ++k) {
    iar::IarModel plus = m, minus = m;
    double& p = k == 0 ? plus.beta0 : plus.betas[k - 1];
    double& q = k == 0 ? minus.beta0 : minus.betas[k - 1];
    p += h;
    q -= h;
    g[k] = (iar::log_loss(plus, obs) - iar::log_loss(minus, obs)) / (2 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

}  // namespace geoprobe::testing
