#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <gtest/gtest.h>
#include <vector>

#include "mcsurv/data.hpp"
#include "mcsurv/error.hpp"
#include "mcsurv/hazard_model.hpp"

namespace mcsurv::testing {

/// Central differences of f at theta with step h.
inline std::vector<double> numeric_gradient(std::vector<double> theta,
                                            const std::function<double(const std::vector<double>&)>& f,
                                            double h = 1e-6) {
  std::vector<double> g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    const double up = f(theta);
    theta[k] = keep - h;
    const double down = f(theta);
    theta[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor): one number per gradient pair.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Random numeric dataset with times on 1..tau and roughly `censor_p`
/// censoring.
inline DiscreteDataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t d, int tau,
                                      double censor_p = 0.3) {
  DiscreteDataset ds;
  ds.tau = tau;
  for (std::size_t j = 0; j < d; ++j) ds.features.push_back({"x" + std::to_string(j), false, {}});
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> time(1, tau);
  std::bernoulli_distribution censored(censor_p);
  for (std::size_t i = 0; i < n; ++i) {
    SurvivalRecord r;
    for (std::size_t j = 0; j < d; ++j) r.features.push_back(normal(rng));
    r.time = time(rng);
    r.event = !censored(rng);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

/// Two-group dataset: column "g" is categorical with labels a/b.
inline DiscreteDataset grouped_dataset(std::mt19937_64& rng, std::size_t n, int tau) {
  auto ds = random_dataset(rng, n, 1, tau);
  ds.features.insert(ds.features.begin(), FeatureInfo{"g", true, {"a", "b"}});
  std::bernoulli_distribution coin(0.5);
  for (auto& r : ds.records) r.features.insert(r.features.begin(), coin(rng) ? 1.0 : 0.0);
  return ds;
}

/// Code of the mcsurv::Error thrown by fn; records a failure if none is.
inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no mcsurv::Error thrown";
  return ErrorCode::Io;
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

}  // namespace mcsurv::testing
