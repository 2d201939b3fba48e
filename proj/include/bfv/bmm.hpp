/*
 * Copyright 2026 The bfv authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bfv/binary_descriptor.hpp"
#include "bfv/error.hpp"
#include "bfv/parallel.hpp"
#include "bfv/rng.hpp"

namespace bfv {

/// Bernoulli mixture over D-bit vectors: N components with weights w[i] and
/// per-bit probabilities mu[i][d], mu clamped to [eps, 1-eps] so that log
/// densities and the Fisher information stay finite.
struct BmmModel {
  std::uint32_t components = 0;  // N
  std::uint32_t dims = 0;        // D
  std::vector<double> weights;   // N entries on the probability simplex
  std::vector<double> mu;        // N*D, component-major: mu[i*D + d]
  double eps = 1e-4;

  // Training provenance; round-trips through the model file.
  std::string rng_name = kRngName;
  std::uint64_t seed = 0;
  std::uint32_t trained_iterations = 0;
  double final_log_likelihood = 0.0;

  double mu_at(std::uint32_t i, std::uint32_t d) const {
    return mu[static_cast<std::size_t>(i) * dims + d];
  }

  void validate() const {
    if (components < 1) throw validation_error("model: component count must be >= 1");
    detail::check_dims(dims);
    if (weights.size() != components) {
      throw validation_error("model: weights length does not match component count");
    }
    if (mu.size() != static_cast<std::size_t>(components) * dims) {
      throw validation_error("model: mu length does not match N*D");
    }
    if (!(eps > 0.0) || eps >= 0.5) {
      throw validation_error("model: eps must lie in (0, 0.5)");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw validation_error("model: weights must be nonnegative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw validation_error("model: weights must sum to 1 within 1e-9, got " +
                             std::to_string(sum));
    }
    for (double m : mu) {
      if (!(m >= eps) || !(m <= 1.0 - eps)) {
        throw validation_error("model: mu entries must lie in [eps, 1-eps]");
      }
    }
  }
};

/// Posterior component probabilities for one descriptor.
struct Occupancy {
  std::vector<double> gamma;
};

struct EmConfig {
  std::uint32_t max_iters = 100;
  double rel_tol = 1e-5;
  std::uint64_t seed = 0;
  double min_component_mass = 1e-6;  // below this fraction a component is reseeded
  double eps = 1e-4;
  unsigned threads = 1;
};

struct EmReport {
  std::uint32_t iterations_run = 0;
  std::vector<double> log_likelihood_trace;  // mean log-likelihood per E-step
  std::uint32_t reseed_events = 0;
};

/// Log-domain parameter table. With base[i] = sum_d log(1-mu_id) and
/// logit[i*D+d] = log(mu_id) - log(1-mu_id), the component log density is
/// base[i] plus the logits of the set bits, which walks only popcount(x)
/// entries per component.
class BmmLogTable {
 public:
  explicit BmmLogTable(const BmmModel& m)
      : components_(m.components), dims_(m.dims), log_weight_(m.components),
        base_(m.components), logit_(m.mu.size()) {
    for (std::uint32_t i = 0; i < components_; ++i) {
      log_weight_[i] = m.weights[i] > 0.0
                           ? std::log(m.weights[i])
                           : -std::numeric_limits<double>::infinity();
      double acc = 0.0;
      const std::size_t row = static_cast<std::size_t>(i) * dims_;
      for (std::uint32_t d = 0; d < dims_; ++d) {
        const double mu = m.mu[row + d];
        acc += std::log1p(-mu);
        logit_[row + d] = std::log(mu) - std::log1p(-mu);
      }
      base_[i] = acc;
    }
  }

  std::uint32_t components() const noexcept { return components_; }
  std::uint32_t dims() const noexcept { return dims_; }

  double log_component_density(std::uint32_t i, std::span<const std::uint64_t> words) const {
    double acc = base_[i];
    const double* row = logit_.data() + static_cast<std::size_t>(i) * dims_;
    for (std::size_t w = 0; w < words.size(); ++w) {
      std::uint64_t bits = words[w];
      const std::size_t offset = w * 64;
      while (bits != 0) {
        acc += row[offset + std::countr_zero(bits)];
        bits &= bits - 1;
      }
    }
    return acc;
  }

  /// Fills out[i] = log w_i + log p_i(x) for every component.
  void joint_log_densities(std::span<const std::uint64_t> words,
                           std::span<double> out) const {
    for (std::uint32_t i = 0; i < components_; ++i) {
      out[i] = log_weight_[i] + log_component_density(i, words);
    }
  }

 private:
  std::uint32_t components_;
  std::uint32_t dims_;
  std::vector<double> log_weight_;
  std::vector<double> base_;
  std::vector<double> logit_;
};

namespace detail {

/// In place: log-space joint densities -> normalized posteriors, pivoting on
/// the maximum so nothing underflows even at D = 1024. Returns the log of the
/// summed densities (the descriptor's log-likelihood).
inline double posterior_from_joint(std::span<double> joint) {
  double pivot = joint[0];
  for (double v : joint) pivot = std::max(pivot, v);
  double total = 0.0;
  for (double& v : joint) {
    v = std::exp(v - pivot);
    total += v;
  }
  for (double& v : joint) v /= total;
  return pivot + std::log(total);
}

inline void check_model_dims(const BmmModel& m, std::uint32_t dims, const char* op) {
  if (m.dims != dims) {
    throw dimension_error(std::string(op) + ": descriptor dimension " +
                          std::to_string(dims) + " does not match model dimension " +
                          std::to_string(m.dims));
  }
}

}  // namespace detail

/// log p_i(x | lambda) = sum_d [x_d log mu_id + (1-x_d) log(1-mu_id)].
inline double log_component_density(const BmmModel& m, std::uint32_t i,
                                    const BinaryDescriptor& x) {
  detail::check_model_dims(m, x.dims(), "log_component_density");
  if (i >= m.components) throw validation_error("component index out of range");
  double acc = 0.0;
  const std::size_t row = static_cast<std::size_t>(i) * m.dims;
  for (std::uint32_t d = 0; d < m.dims; ++d) {
    const double mu = m.mu[row + d];
    acc += x.bit(d) ? std::log(mu) : std::log1p(-mu);
  }
  return acc;
}

/// Posterior gamma[i] = w_i p_i(x) / sum_j w_j p_j(x), computed in log space.
inline Occupancy posterior(const BmmModel& m, const BinaryDescriptor& x) {
  detail::check_model_dims(m, x.dims(), "posterior");
  const BmmLogTable table(m);
  Occupancy occ;
  occ.gamma.resize(m.components);
  table.joint_log_densities(x.words(), occ.gamma);
  detail::posterior_from_joint(occ.gamma);
  return occ;
}

/// (1/T) sum_t log sum_i w_i p_i(x_t), log-sum-exp stabilized.
inline double mean_log_likelihood(const BmmModel& m, const FeatureSet& xs,
                                  unsigned threads = 1) {
  detail::check_model_dims(m, xs.dims(), "mean_log_likelihood");
  if (xs.empty()) throw validation_error("mean_log_likelihood: empty feature set");
  const BmmLogTable table(m);

  double total = 0.0;
  chunked_reduce<double>(
      xs.size(), 1024, threads, [] { return 0.0; },
      [&](double& partial, std::size_t begin, std::size_t end) {
        std::vector<double> joint(m.components);
        for (std::size_t t = begin; t < end; ++t) {
          table.joint_log_densities(xs.words(t), joint);
          partial += detail::posterior_from_joint(joint);
        }
      },
      [&](double& partial) { total += partial; });
  return total / static_cast<double>(xs.size());
}

namespace detail {

struct EmStats {
  std::vector<double> mass;      // N: sum_s gamma_s(i)
  std::vector<double> bit_mass;  // N*D: sum_s gamma_s(i) * x_sd
  double log_likelihood = 0.0;

  EmStats(std::uint32_t n, std::uint32_t d)
      : mass(n, 0.0), bit_mass(static_cast<std::size_t>(n) * d, 0.0) {}
};

}  // namespace detail

/// EM estimation. Weights start at 1/N, mu at U(0.25, 0.75) draws from a
/// mt19937_64 seeded with cfg.seed (component-major draw order). Each M-step
/// sets w_i = S_i/S and mu_id = (1/S_i) sum_s gamma_s(i) x_sd, clamped to
/// [eps, 1-eps]. Components whose mass fraction falls below
/// cfg.min_component_mass are reseeded at a random data point. Stops at
/// max_iters or when the relative gain in mean log-likelihood drops below
/// rel_tol. Deterministic for a fixed (data, n_components, seed), regardless
/// of cfg.threads.
inline std::pair<BmmModel, EmReport> fit_em(const FeatureSet& data,
                                            std::uint32_t n_components,
                                            const EmConfig& cfg) {
  if (n_components < 1) throw validation_error("fit_em: need at least one component");
  if (data.size() < n_components) {
    throw validation_error("fit_em: " + std::to_string(data.size()) +
                           " data points cannot support " +
                           std::to_string(n_components) + " components");
  }
  if (cfg.max_iters < 1) throw validation_error("fit_em: max_iters must be >= 1");
  if (!(cfg.rel_tol >= 0.0)) throw validation_error("fit_em: rel_tol must be >= 0");

  const std::uint32_t n = n_components;
  const std::uint32_t d = data.dims();
  const auto clamp_mu = [&](double v) {
    return std::clamp(v, cfg.eps, 1.0 - cfg.eps);
  };

  BmmModel model;
  model.components = n;
  model.dims = d;
  model.eps = cfg.eps;
  model.seed = cfg.seed;
  model.rng_name = kRngName;
  model.weights.assign(n, 1.0 / n);
  model.mu.resize(static_cast<std::size_t>(n) * d);

  Rng rng(cfg.seed);
  for (double& m : model.mu) m = uniform_real(rng, 0.25, 0.75);

  EmReport report;
  const std::size_t count = data.size();

  for (std::uint32_t iter = 0; iter < cfg.max_iters; ++iter) {
    const BmmLogTable table(model);
    detail::EmStats stats(n, d);
    chunked_reduce<detail::EmStats>(
        count, 1024, cfg.threads, [&] { return detail::EmStats(n, d); },
        [&](detail::EmStats& partial, std::size_t begin, std::size_t end) {
          std::vector<double> gamma(n);
          for (std::size_t s = begin; s < end; ++s) {
            const auto words = data.words(s);
            table.joint_log_densities(words, gamma);
            partial.log_likelihood += detail::posterior_from_joint(gamma);
            for (std::uint32_t i = 0; i < n; ++i) {
              const double g = gamma[i];
              partial.mass[i] += g;
              double* row = partial.bit_mass.data() + static_cast<std::size_t>(i) * d;
              for (std::size_t w = 0; w < words.size(); ++w) {
                std::uint64_t bits = words[w];
                const std::size_t offset = w * 64;
                while (bits != 0) {
                  row[offset + std::countr_zero(bits)] += g;
                  bits &= bits - 1;
                }
              }
            }
          }
        },
        [&](detail::EmStats& partial) {
          stats.log_likelihood += partial.log_likelihood;
          for (std::uint32_t i = 0; i < n; ++i) stats.mass[i] += partial.mass[i];
          for (std::size_t k = 0; k < stats.bit_mass.size(); ++k) {
            stats.bit_mass[k] += partial.bit_mass[k];
          }
        });

    const double mean_ll = stats.log_likelihood / static_cast<double>(count);
    report.log_likelihood_trace.push_back(mean_ll);

    if (report.log_likelihood_trace.size() >= 2) {
      const double prev = report.log_likelihood_trace[report.log_likelihood_trace.size() - 2];
      const double gain = mean_ll - prev;
      if (gain / std::max(std::abs(prev), 1e-12) < cfg.rel_tol) break;
    }

    // M-step.
    std::vector<bool> reseed(n, false);
    for (std::uint32_t i = 0; i < n; ++i) {
      const double fraction = stats.mass[i] / static_cast<double>(count);
      if (!(fraction >= cfg.min_component_mass)) {
        reseed[i] = true;
        continue;
      }
      model.weights[i] = fraction;
      const std::size_t row = static_cast<std::size_t>(i) * d;
      for (std::uint32_t dd = 0; dd < d; ++dd) {
        model.mu[row + dd] = clamp_mu(stats.bit_mass[row + dd] / stats.mass[i]);
      }
    }
    bool any_reseed = false;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!reseed[i]) continue;
      any_reseed = true;
      ++report.reseed_events;
      const std::size_t pick = uniform_index(rng, count);
      const std::size_t row = static_cast<std::size_t>(i) * d;
      for (std::uint32_t dd = 0; dd < d; ++dd) {
        model.mu[row + dd] = clamp_mu(data.bit(pick, dd) ? 1.0 : 0.0);
      }
      model.weights[i] = 1.0 / n;
    }
    if (any_reseed) {
      double sum = 0.0;
      for (double w : model.weights) sum += w;
      for (double& w : model.weights) w /= sum;
    }
    ++report.iterations_run;
  }

  // Exact renormalization so the stored weights satisfy the simplex invariant.
  double sum = 0.0;
  for (double w : model.weights) sum += w;
  for (double& w : model.weights) w /= sum;

  model.trained_iterations = report.iterations_run;
  model.final_log_likelihood = report.log_likelihood_trace.back();
  model.validate();
  return {std::move(model), std::move(report)};
}

}  // namespace bfv
