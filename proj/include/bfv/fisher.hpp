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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bfv/binary_descriptor.hpp"
#include "bfv/bmm.hpp"
#include "bfv/error.hpp"
#include "bfv/norm_state.hpp"
#include "bfv/parallel.hpp"
#include "bfv/rng.hpp"

namespace bfv {

/// Encoded image signature of length N*D, laid out component-major: block i
/// holds dimensions [i*D, (i+1)*D).
struct FisherVec {
  std::vector<double> values;
  std::uint32_t components = 0;
  std::uint32_t dims = 0;
  NormState norm_state = NormState::raw;

  std::span<double> block(std::uint32_t i) {
    return {values.data() + static_cast<std::size_t>(i) * dims, dims};
  }
  std::span<const double> block(std::uint32_t i) const {
    return {values.data() + static_cast<std::size_t>(i) * dims, dims};
  }
};

/// One binary vector per component: bit d is 1 iff mu[i][d] >= 0.5. Supports
/// replacing the posterior with a Hamming nearest-representative one-hot.
struct RepresentativeCodebook {
  std::vector<BinaryDescriptor> reps;
};

/// Scaling convention for the Fisher information: either the encoded image's
/// actual feature count enters the closed form, or the count is fixed at one.
/// The information is linear in the count, so under any final l2-style
/// normalization both conventions yield identical retrieval rankings.
enum class InfoScale { per_image_count, unit };

namespace detail {

struct ScoreStats {
  std::vector<double> mass;      // N: sum_t gamma_t(i)
  std::vector<double> bit_mass;  // N*D: sum_t gamma_t(i) * x_td

  ScoreStats(std::uint32_t n, std::uint32_t d)
      : mass(n, 0.0), bit_mass(static_cast<std::size_t>(n) * d, 0.0) {}

  void absorb(const ScoreStats& other) {
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] += other.mass[i];
    for (std::size_t k = 0; k < bit_mass.size(); ++k) bit_mass[k] += other.bit_mass[k];
  }
};

inline void accumulate_weighted_bits(ScoreStats& stats, std::uint32_t n,
                                     std::uint32_t dims,
                                     std::span<const std::uint64_t> words,
                                     std::span<const double> gamma) {
  for (std::uint32_t i = 0; i < n; ++i) {
    const double g = gamma[i];
    stats.mass[i] += g;
    double* row = stats.bit_mass.data() + static_cast<std::size_t>(i) * dims;
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

/// Soft-posterior sufficient statistics of X under the model.
inline ScoreStats exact_score_stats(const BmmModel& m, const FeatureSet& xs,
                                    unsigned threads) {
  const BmmLogTable table(m);
  const std::uint32_t n = m.components;
  ScoreStats stats(n, m.dims);
  chunked_reduce<ScoreStats>(
      xs.size(), 256, threads, [&] { return ScoreStats(n, m.dims); },
      [&](ScoreStats& partial, std::size_t begin, std::size_t end) {
        std::vector<double> gamma(n);
        for (std::size_t t = begin; t < end; ++t) {
          const auto words = xs.words(t);
          table.joint_log_densities(words, gamma);
          posterior_from_joint(gamma);
          accumulate_weighted_bits(partial, n, m.dims, words, gamma);
        }
      },
      [&](ScoreStats& partial) { stats.absorb(partial); });
  return stats;
}

/// Scores from sufficient statistics: entry (i,d) of the gradient is
/// (1/T) * [B_id / mu_id - (A_i - B_id) / (1 - mu_id)].
inline std::vector<double> scores_from_stats(const BmmModel& m, const ScoreStats& stats,
                                             std::size_t feature_count) {
  std::vector<double> scores(m.mu.size());
  const double inv_t = 1.0 / static_cast<double>(feature_count);
  for (std::uint32_t i = 0; i < m.components; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * m.dims;
    const double mass = stats.mass[i];
    for (std::uint32_t d = 0; d < m.dims; ++d) {
      const double ones = stats.bit_mass[row + d];
      const double mu = m.mu[row + d];
      scores[row + d] = inv_t * (ones / mu - (mass - ones) / (1.0 - mu));
    }
  }
  return scores;
}

inline void check_encodable(const BmmModel& m, const FeatureSet& xs, const char* op) {
  check_model_dims(m, xs.dims(), op);
  if (xs.empty()) throw validation_error(std::string(op) + ": empty feature set");
}

}  // namespace detail

/// Gradient of the mean log-likelihood w.r.t. each mu_id:
/// (1/T) sum_t gamma_t(i) * (-1)^(1-x_td) / (mu_id^x_td (1-mu_id)^(1-x_td)).
inline std::vector<double> fisher_score(const BmmModel& m, const FeatureSet& xs,
                                        unsigned threads = 1) {
  detail::check_encodable(m, xs, "fisher_score");
  const detail::ScoreStats stats = detail::exact_score_stats(m, xs, threads);
  return detail::scores_from_stats(m, stats, xs.size());
}

/// Closed-form diagonal Fisher information:
/// F_id = T * w_i * (sum_j w_j mu_jd / mu_id^2
///                   + sum_j w_j (1-mu_jd) / (1-mu_id)^2).
inline std::vector<double> fisher_information_diag(const BmmModel& m,
                                                   std::uint64_t feature_count) {
  if (feature_count < 1) {
    throw validation_error("fisher_information_diag: feature count must be >= 1");
  }
  std::vector<double> mixture_mean(m.dims, 0.0);  // sum_j w_j mu_jd per bit
  for (std::uint32_t j = 0; j < m.components; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * m.dims;
    for (std::uint32_t d = 0; d < m.dims; ++d) {
      mixture_mean[d] += m.weights[j] * m.mu[row + d];
    }
  }
  std::vector<double> info(m.mu.size());
  const double t = static_cast<double>(feature_count);
  for (std::uint32_t i = 0; i < m.components; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * m.dims;
    for (std::uint32_t d = 0; d < m.dims; ++d) {
      const double mu = m.mu[row + d];
      info[row + d] = t * m.weights[i] *
                      (mixture_mean[d] / (mu * mu) +
                       (1.0 - mixture_mean[d]) / ((1.0 - mu) * (1.0 - mu)));
    }
  }
  return info;
}

namespace detail {

inline FisherVec encode_from_stats(const BmmModel& m, const ScoreStats& stats,
                                   std::size_t feature_count, InfoScale scale) {
  FisherVec out;
  out.components = m.components;
  out.dims = m.dims;
  out.norm_state = NormState::raw;
  out.values = scores_from_stats(m, stats, feature_count);
  const std::vector<double> info = fisher_information_diag(
      m, scale == InfoScale::per_image_count ? feature_count : 1);
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    // info is zero only for zero-weight components, whose scores are zero too.
    out.values[k] = info[k] > 0.0 ? out.values[k] / std::sqrt(info[k]) : 0.0;
  }
  return out;
}

}  // namespace detail

/// Exact Fisher vector: scores whitened by the inverse square root of the
/// diagonal Fisher information.
template <InfoScale Scale = InfoScale::per_image_count>
FisherVec encode(const BmmModel& m, const FeatureSet& xs, unsigned threads = 1) {
  detail::check_encodable(m, xs, "encode");
  const detail::ScoreStats stats = detail::exact_score_stats(m, xs, threads);
  return detail::encode_from_stats(m, stats, xs.size(), Scale);
}

/// Thresholds mu at 0.5; the boundary value maps to bit 1.
inline RepresentativeCodebook representative_codebook(const BmmModel& m) {
  RepresentativeCodebook cb;
  cb.reps.reserve(m.components);
  for (std::uint32_t i = 0; i < m.components; ++i) {
    BinaryDescriptor y(m.dims);
    const std::size_t row = static_cast<std::size_t>(i) * m.dims;
    for (std::uint32_t d = 0; d < m.dims; ++d) {
      if (m.mu[row + d] >= 0.5) y.set_bit(d, true);
    }
    cb.reps.push_back(std::move(y));
  }
  return cb;
}

namespace detail {

/// Index of the Hamming-nearest representative; ties go to the lowest index.
inline std::uint32_t nearest_representative(const RepresentativeCodebook& cb,
                                            std::span<const std::uint64_t> words) {
  std::uint32_t best = 0;
  std::uint32_t best_distance = hamming_words(cb.reps[0].words(), words);
  for (std::uint32_t i = 1; i < cb.reps.size(); ++i) {
    const std::uint32_t distance = hamming_words(cb.reps[i].words(), words);
    if (distance < best_distance) {
      best = i;
      best_distance = distance;
    }
  }
  return best;
}

/// Hard-assignment sufficient statistics: gamma replaced by a one-hot at the
/// Hamming-nearest representative.
inline ScoreStats approx_score_stats(const BmmModel& m, const RepresentativeCodebook& cb,
                                     const FeatureSet& xs, unsigned threads) {
  const std::uint32_t n = m.components;
  ScoreStats stats(n, m.dims);
  chunked_reduce<ScoreStats>(
      xs.size(), 4096, threads, [&] { return ScoreStats(n, m.dims); },
      [&](ScoreStats& partial, std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          const auto words = xs.words(t);
          const std::uint32_t pick = nearest_representative(cb, words);
          partial.mass[pick] += 1.0;
          double* row = partial.bit_mass.data() + static_cast<std::size_t>(pick) * m.dims;
          for (std::size_t w = 0; w < words.size(); ++w) {
            std::uint64_t bits = words[w];
            const std::size_t offset = w * 64;
            while (bits != 0) {
              row[offset + std::countr_zero(bits)] += 1.0;
              bits &= bits - 1;
            }
          }
        }
      },
      [&](ScoreStats& partial) { stats.absorb(partial); });
  return stats;
}

}  // namespace detail

/// Fast approximated Fisher vector: identical to encode() except that the
/// posterior is the one-hot of the Hamming-nearest representative vector.
template <InfoScale Scale = InfoScale::per_image_count>
FisherVec encode_approx(const BmmModel& m, const RepresentativeCodebook& cb,
                        const FeatureSet& xs, unsigned threads = 1) {
  detail::check_encodable(m, xs, "encode_approx");
  if (cb.reps.size() != m.components) {
    throw validation_error("encode_approx: codebook size does not match model");
  }
  if (!cb.reps.empty() && cb.reps[0].dims() != m.dims) {
    throw dimension_error("encode_approx: codebook dimension does not match model");
  }
  const detail::ScoreStats stats = detail::approx_score_stats(m, cb, xs, threads);
  return detail::encode_from_stats(m, stats, xs.size(), Scale);
}

/// How sharp the posteriors are, and how often the Hamming-nearest
/// representative agrees with the posterior argmax (ties in both selectors
/// resolve to the lowest index).
struct PeakednessReport {
  std::vector<std::uint64_t> max_gamma_histogram;  // uniform bins over [0, 1]
  double bin_width = 0.0;
  std::uint64_t descriptor_count = 0;
  double argmin_argmax_agreement = 0.0;
};

inline PeakednessReport posterior_peakedness(const BmmModel& m, const FeatureSet& xs,
                                             std::size_t bins = 20) {
  detail::check_encodable(m, xs, "posterior_peakedness");
  if (bins < 1) throw validation_error("posterior_peakedness: need at least one bin");
  const BmmLogTable table(m);
  const RepresentativeCodebook cb = representative_codebook(m);

  PeakednessReport report;
  report.max_gamma_histogram.assign(bins, 0);
  report.bin_width = 1.0 / static_cast<double>(bins);
  report.descriptor_count = xs.size();

  std::vector<double> gamma(m.components);
  std::uint64_t agreements = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto words = xs.words(t);
    table.joint_log_densities(words, gamma);
    detail::posterior_from_joint(gamma);
    std::uint32_t argmax = 0;
    for (std::uint32_t i = 1; i < m.components; ++i) {
      if (gamma[i] > gamma[argmax]) argmax = i;
    }
    const double peak = gamma[argmax];
    std::size_t bin = static_cast<std::size_t>(peak * bins);
    if (bin >= bins) bin = bins - 1;
    ++report.max_gamma_histogram[bin];
    if (detail::nearest_representative(cb, words) == argmax) ++agreements;
  }
  report.argmin_argmax_agreement =
      static_cast<double>(agreements) / static_cast<double>(xs.size());
  return report;
}

/// Both sides of the closed-form information's inner integrals, reported
/// without asserting equality. The enumerated values are exact sums of
/// p(x|lambda) * gamma_x(i) over all 2^D bit vectors with bit d fixed; the
/// rhs values are the printed closed forms w_i * sum_j w_j mu_jd and
/// w_i * sum_j w_j (1 - mu_jd). The two agree only when every component
/// shares the same mu at bit d (exact marginalization gives w_i * mu_id).
struct IntegralIdentityReport {
  double enumerated_bit1 = 0.0;
  double enumerated_bit0 = 0.0;
  double paper_rhs_bit1 = 0.0;
  double paper_rhs_bit0 = 0.0;
};

inline IntegralIdentityReport integral_identity_oracle(const BmmModel& m,
                                                       std::uint32_t i,
                                                       std::uint32_t d) {
  if (m.dims > 16) {
    throw validation_error("integral_identity_oracle: exact enumeration needs D <= 16");
  }
  if (i >= m.components) throw validation_error("component index out of range");
  if (d >= m.dims) throw validation_error("bit index out of range");

  IntegralIdentityReport report;
  const std::uint64_t total = std::uint64_t{1} << m.dims;
  std::vector<double> densities(m.components);
  for (std::uint64_t x = 0; x < total; ++x) {
    // Plain products, no log-space tricks: this is the independent oracle.
    double mixture = 0.0;
    for (std::uint32_t j = 0; j < m.components; ++j) {
      double p = 1.0;
      const std::size_t row = static_cast<std::size_t>(j) * m.dims;
      for (std::uint32_t dd = 0; dd < m.dims; ++dd) {
        const double mu = m.mu[row + dd];
        p *= ((x >> dd) & 1u) ? mu : (1.0 - mu);
      }
      densities[j] = m.weights[j] * p;
      mixture += densities[j];
    }
    const double gamma_i = mixture > 0.0 ? densities[i] / mixture : 0.0;
    if ((x >> d) & 1u) {
      report.enumerated_bit1 += mixture * gamma_i;
    } else {
      report.enumerated_bit0 += mixture * gamma_i;
    }
  }

  double weighted_mean = 0.0;
  for (std::uint32_t j = 0; j < m.components; ++j) {
    weighted_mean += m.weights[j] * m.mu_at(j, d);
  }
  report.paper_rhs_bit1 = m.weights[i] * weighted_mean;
  report.paper_rhs_bit0 = m.weights[i] * (1.0 - weighted_mean);
  return report;
}

/// Draws one descriptor from the mixture: component by cumulative weight,
/// then each bit Bernoulli(mu_id) in ascending d.
inline BinaryDescriptor sample_descriptor(const BmmModel& m, Rng& rng) {
  const double u = uniform_unit(rng);
  std::uint32_t comp = m.components - 1;
  double cumulative = 0.0;
  for (std::uint32_t i = 0; i < m.components; ++i) {
    cumulative += m.weights[i];
    if (u < cumulative) {
      comp = i;
      break;
    }
  }
  BinaryDescriptor x(m.dims);
  const std::size_t row = static_cast<std::size_t>(comp) * m.dims;
  for (std::uint32_t d = 0; d < m.dims; ++d) {
    if (bernoulli(rng, m.mu[row + d])) x.set_bit(d, true);
  }
  return x;
}

/// Monte-Carlo estimate of the per-feature Fisher information diagonal entry
/// E[(d/d mu_id log p(x|lambda))^2] under x ~ p(.|lambda).
inline double fisher_information_empirical(const BmmModel& m, std::uint32_t i,
                                           std::uint32_t d, std::size_t sample_count,
                                           std::uint64_t seed) {
  if (sample_count < 1) {
    throw validation_error("fisher_information_empirical: need at least one sample");
  }
  if (i >= m.components) throw validation_error("component index out of range");
  if (d >= m.dims) throw validation_error("bit index out of range");
  const BmmLogTable table(m);
  Rng rng(seed);
  const double mu = m.mu_at(i, d);
  std::vector<double> gamma(m.components);
  double acc = 0.0;
  for (std::size_t s = 0; s < sample_count; ++s) {
    const BinaryDescriptor x = sample_descriptor(m, rng);
    table.joint_log_densities(x.words(), gamma);
    detail::posterior_from_joint(gamma);
    const double derivative =
        gamma[i] * (x.bit(d) ? 1.0 / mu : -1.0 / (1.0 - mu));
    acc += derivative * derivative;
  }
  return acc / static_cast<double>(sample_count);
}

}  // namespace bfv
