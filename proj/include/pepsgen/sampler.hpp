#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pepsgen/boundary_mps.hpp"
#include "pepsgen/peps.hpp"

namespace pepsgen {

/// A configuration drawn from the proposal q built from (possibly truncated)
/// conditionals, with its importance weight |Psi(x)|^2 / q(x).
struct WeightedSample {
  GridConfig config;
  double log_q = 0.0;
  double log_psi2 = 0.0;
  double log_weight = 0.0;
  double weight = 0.0;  // exp(log_weight); may overflow for large models
};

/// Raster-order direct sampler. Construction caches the bottom-up boundary
/// MPSes of the traced double-layer network, shared by every draw. Rows
/// already sampled are held as the single-layer boundary MPS of the
/// amplitude contraction and enter the conditionals as its bra-ket pair, so
/// the final amplitude of a draw comes out of the same sweep. Drawing is
/// read-only; the sampler keeps a reference to the model.
class DirectSampler {
 public:
  DirectSampler(const Peps& p, const ContractionSettings& s);

  WeightedSample draw(std::mt19937_64& rng) const;

  /// log q(x): the log-probability that draw() produces x.
  double log_proposal(const GridConfig& x) const;

  const Peps& model() const noexcept { return *peps_; }

 private:
  template <class Chooser>
  GridConfig walk(Chooser&& choose, double& log_q, SignedLog* amp) const;

  const Peps* peps_;
  detail::Truncation trunc_;
  std::vector<std::vector<Tensor>> slices_;   // per site, per value: (u,l,d,r)
  std::vector<detail::BoundaryMps> bottoms_;  // bottoms_[r]: rows r..H-1, bra-ket
};

WeightedSample direct_sample(const Peps& p, const ContractionSettings& s,
                             std::mt19937_64& rng);

/// Generator for sample `index` of a batch seeded with `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index);

/// n independent samples; sample i uses stream_rng(seed, i).
std::vector<WeightedSample> sample_batch(const Peps& p, std::size_t n,
                                         const ContractionSettings& s,
                                         std::uint64_t seed);

struct LogNormEstimate {
  double log_z = 0.0;
  double std_err = 0.0;  // standard error of the mean weight, relative
};

/// log of the mean importance weight and its standard error on log scale.
LogNormEstimate log_norm_from_samples(std::span<const WeightedSample> samples);

LogNormEstimate estimate_log_norm(const Peps& p, std::size_t n_samples,
                                  const ContractionSettings& s,
                                  std::mt19937_64& rng);

}  // namespace pepsgen
