#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pepsgen/peps.hpp"
#include "pepsgen/sampler.hpp"

namespace pepsgen {

struct MixtureMode {
  Peps peps;
  double weight = 1.0;
  std::size_t count = 0;  // training examples behind the weight, 0 if unknown
  std::int64_t id = -1;   // label or cluster id the mode was trained on
  double log_z = 0.0;
  double log_z_stderr = 0.0;
};

/// P(x) = sum_i w_i |Psi_i(x)|^2 / Z_i. Immutable once built.
class MixtureModel {
 public:
  /// Throws kInput unless there is at least one mode, weights are positive
  /// and sum to 1 within 1e-12, and all modes share H, W and d.
  explicit MixtureModel(std::vector<MixtureMode> modes);

  /// One mode with weight 1.
  static MixtureModel single(Peps p, double log_z, double log_z_stderr = 0.0);

  std::size_t size() const noexcept { return modes_.size(); }
  const MixtureMode& mode(std::size_t i) const { return modes_.at(i); }
  const std::vector<MixtureMode>& modes() const noexcept { return modes_; }
  std::size_t height() const noexcept { return modes_.front().peps.height(); }
  std::size_t width() const noexcept { return modes_.front().peps.width(); }
  std::size_t phys_dim() const noexcept { return modes_.front().peps.phys_dim(); }

 private:
  std::vector<MixtureMode> modes_;
};

/// log P_i(x) = 2 log|Psi_i(x)| - log Z_i; -inf where Psi_i(x) = 0.
double mode_log_prob(const MixtureMode& m, const GridConfig& x,
                     const ContractionSettings& s);

double mixture_log_prob(const MixtureModel& mm, const GridConfig& x,
                        const ContractionSettings& s);

/// argmax_i log(w_i P_i(x)), lowest index on ties. Throws kNoSupport when
/// every mode assigns zero probability.
std::size_t classify(const MixtureModel& mm, const GridConfig& x,
                     const ContractionSettings& s);

/// Picks a mode from the weights, then draws from that mode's sampler.
class MixtureSampler {
 public:
  MixtureSampler(const MixtureModel& mm, const ContractionSettings& s);

  struct Draw {
    std::size_t mode = 0;
    WeightedSample sample;
  };
  Draw draw(std::mt19937_64& rng) const;

 private:
  const MixtureModel* mm_;
  std::vector<DirectSampler> samplers_;
  std::vector<double> cumulative_;
};

struct LogRatioSummary {
  std::size_t n = 0;
  std::size_t infinite = 0;  // +inf entries: Q vanishes at a P-sample
  double mean = 0.0;         // over finite entries; estimates D_KL(P||Q)
  double median = 0.0;       // over all entries
};

/// log P(x) - log Q(x) for n samples x ~ P.
std::vector<double> log_ratio_samples(const MixtureModel& p, const MixtureModel& q,
                                      std::size_t n, const ContractionSettings& s,
                                      std::mt19937_64& rng);

LogRatioSummary summarize_log_ratios(std::span<const double> ratios);

/// Weights N_i / sum N; log Z_i re-estimated with `norm_samples` draws per
/// mode. Throws kEmptyMode on a zero count.
MixtureModel build_mixture(std::span<const std::size_t> counts,
                           std::vector<Peps> trained, std::size_t norm_samples,
                           const ContractionSettings& s, std::mt19937_64& rng);

/// Text manifest; model paths are written as given and resolved relative to
/// the manifest's directory on load.
void save_mixture_manifest(const std::filesystem::path& manifest,
                           const MixtureModel& mm,
                           std::span<const std::string> model_paths);
MixtureModel load_mixture_manifest(const std::filesystem::path& manifest);

/// True if the file starts like a mixture manifest.
bool is_mixture_manifest(const std::filesystem::path& path);

}  // namespace pepsgen
