#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pepsgen/peps.hpp"
#include "pepsgen/sampler.hpp"

namespace pepsgen {

/// Switch from the initial to the late negative batch size once the train
/// NLL improves by less than `rel_tol` (relative) across `window`
/// evaluations, or at iteration `max_iter`, whichever comes first.
struct PlateauCriterion {
  std::size_t window = 50;
  double rel_tol = 1e-3;
  std::size_t max_iter = 1000;
};

struct TrainRecord {
  std::size_t iter = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double log_z = 0.0;
  double log_z_stderr = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_pos = 200;
  std::size_t batch_neg_initial = 200;
  std::size_t batch_neg_late = 1000;
  PlateauCriterion switch_criterion;
  std::size_t max_iters = 2000;
  std::size_t eval_interval = 10;
  std::size_t norm_samples = 1000;       // per report row
  std::size_t init_norm_samples = 1000;  // for normalize_init
  std::size_t eval_max_examples = 0;     // 0: evaluate on every example
  ContractionSettings chi;
  std::uint64_t seed = 0;
  bool record_wall_time = false;  // off keeps reports byte-reproducible
  /// Called after each report row; returning false ends training there.
  std::function<bool(const TrainRecord&)> on_record;

  /// Throws kInput on out-of-range fields.
  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const Peps& p);
};


struct TrainReport {
  std::vector<TrainRecord> rows;

  static constexpr const char* kCsvHeader =
      "iter,train_nll,val_nll,log_z,log_z_stderr,seconds";
  void write_csv(std::ostream& os) const;
  static TrainReport read_csv(std::istream& is);
};

/// Mean negative log-likelihood in nats given log Z. Throws
/// InfiniteNllError carrying the data index on a zero amplitude.
double nll(const Peps& p, std::span<const GridConfig> data, double log_z,
           const ContractionSettings& s);

/// d(-L)/dA_j for every site: the data term minus the self-normalized
/// importance-weighted model term, each scaled by 2.
std::vector<Tensor> gradient(const Peps& p, std::span<const GridConfig> data_batch,
                             std::span<const WeightedSample> model_samples,
                             const ContractionSettings& s);

void adam_step(Peps& p, std::span<const Tensor> grad, AdamState& state,
               const TrainConfig& cfg);

/// Rescales every site so that the estimated norm becomes one.
Peps normalize_init(const Peps& p, std::size_t n_samples,
                    const ContractionSettings& s, std::mt19937_64& rng);

struct TrainResult {
  Peps model;  // best-validation snapshot
  TrainReport report;
  bool aborted = false;
  std::string abort_reason;
};

TrainResult train_mode(const Peps& init, std::span<const GridConfig> train_data,
                       std::span<const GridConfig> val_data,
                       const TrainConfig& cfg);

}  // namespace pepsgen
