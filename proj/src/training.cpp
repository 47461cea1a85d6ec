#include "pepsgen/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "pepsgen/error.hpp"
#include "pepsgen/rng.hpp"

namespace pepsgen {

namespace {

// Sub-stream tags under TrainConfig::seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPositiveStream = 2;
constexpr std::uint64_t kNegativeStream = 3;
constexpr std::uint64_t kEvalStream = 4;

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void check_grid(const Peps& p, const GridConfig& x, std::size_t index) {
  if (x.height() != p.height() || x.width() != p.width()) {
    throw Error(ErrorKind::kDimension,
                "example " + std::to_string(index) + " is " +
                    std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                    ", model is " + std::to_string(p.height()) + "x" +
                    std::to_string(p.width()));
  }
  for (auto v : x.values()) {
    if (v >= p.phys_dim()) {
      throw Error(ErrorKind::kDimension, "example " + std::to_string(index) +
                                             " has a value outside [0, d)");
    }
  }
}

std::vector<Tensor> zeros_like(const Peps& p) {
  std::vector<Tensor> out;
  out.reserve(p.num_sites());
  for (const auto& t : p.tensors()) out.emplace_back(t.shape(), 0.0);
  return out;
}

// Adds c * dlog|Psi(x)|/dA_j to acc for every site.
void accumulate(std::vector<Tensor>& acc, const Peps& p, const GridConfig& x,
                double c, const ContractionSettings& s) {
  std::vector<Tensor> o = log_derivatives(p, x, s);
  for (std::size_t j = 0; j < acc.size(); ++j) {
    auto dst = acc[j].data();
    auto src = o[j].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::kInput, "training config: " + what);
  };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (batch_pos == 0 || batch_neg_initial == 0 || batch_neg_late == 0) {
    fail("batch sizes must be positive");
  }
  if (eval_interval == 0) fail("eval_interval must be positive");
  if (norm_samples < 2 || init_norm_samples < 2) {
    fail("norm sample budgets must be at least 2");
  }
  if (switch_criterion.window == 0) fail("switch window must be positive");
}

AdamState AdamState::zeros_like(const Peps& p) {
  AdamState st;
  st.m = pepsgen::zeros_like(p);
  st.v = pepsgen::zeros_like(p);
  return st;
}

void TrainReport::write_csv(std::ostream& os) const {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.iter << ',' << format_real(r.train_nll) << ','
       << format_real(r.val_nll) << ',' << format_real(r.log_z) << ','
       << format_real(r.log_z_stderr) << ',' << format_real(r.seconds) << '\n';
  }
}

TrainReport TrainReport::read_csv(std::istream& is) {
  TrainReport rep;
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) {
    throw Error(ErrorKind::kFormat, "report CSV: missing header at line 1");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 6) {
      throw Error(ErrorKind::kFormat,
                  "report CSV: expected 6 fields at line " + std::to_string(lineno));
    }
    try {
      TrainRecord r;
      r.iter = std::stoull(f[0]);
      r.train_nll = std::stod(f[1]);
      r.val_nll = std::stod(f[2]);
      r.log_z = std::stod(f[3]);
      r.log_z_stderr = std::stod(f[4]);
      r.seconds = std::stod(f[5]);
      rep.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kFormat,
                  "report CSV: bad number at line " + std::to_string(lineno));
    }
  }
  return rep;
}

double nll(const Peps& p, std::span<const GridConfig> data, double log_z,
           const ContractionSettings& s) {
  if (data.empty()) throw Error(ErrorKind::kInput, "nll: empty data");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_grid(p, data[i], i);
    const SignedLog a = amplitude(p, data[i], s);
    if (a.sign == 0) {
      throw InfiniteNllError(i, "zero amplitude at data index " + std::to_string(i));
    }
    sum += 2.0 * a.log_mag - log_z;
  }
  return -sum / static_cast<double>(data.size());
}

std::vector<Tensor> gradient(const Peps& p, std::span<const GridConfig> data_batch,
                             std::span<const WeightedSample> model_samples,
                             const ContractionSettings& s) {
  if (data_batch.empty() || model_samples.empty()) {
    throw Error(ErrorKind::kInput, "gradient: both batches must be nonempty");
  }
  std::vector<Tensor> grad = zeros_like(p);

  // Repeated configurations share one environment sweep.
  std::map<GridConfig, std::pair<std::size_t, std::size_t>> counts;  // first index, count
  for (std::size_t i = 0; i < data_batch.size(); ++i) {
    check_grid(p, data_batch[i], i);
    auto [it, inserted] = counts.try_emplace(data_batch[i], i, 0);
    ++it->second.second;
  }
  const double n_data = static_cast<double>(data_batch.size());
  for (const auto& [x, info] : counts) {
    try {
      accumulate(grad, p, x, -2.0 * static_cast<double>(info.second) / n_data, s);
    } catch (const InfiniteNllError&) {
      throw InfiniteNllError(info.first, "zero amplitude at data index " +
                                             std::to_string(info.first));
    }
  }

  double max_lw = -std::numeric_limits<double>::infinity();
  for (const auto& w : model_samples) max_lw = std::max(max_lw, w.log_weight);
  if (!std::isfinite(max_lw)) {
    throw Error(ErrorKind::kNumeric, "gradient: every model sample has zero weight");
  }
  std::map<GridConfig, double> weights;
  double total = 0.0;
  for (const auto& w : model_samples) {
    if (!std::isfinite(w.log_weight)) continue;
    const double u = std::exp(w.log_weight - max_lw);
    weights[w.config] += u;
    total += u;
  }
  for (const auto& [x, u] : weights) {
    try {
      accumulate(grad, p, x, 2.0 * u / total, s);
    } catch (const InfiniteNllError&) {
      // A truncated environment can vanish where the sweep amplitude did
      // not; such a sample carries no usable direction.
    }
  }
  return grad;
}

void adam_step(Peps& p, std::span<const Tensor> grad, AdamState& state,
               const TrainConfig& cfg) {
  if (grad.size() != p.num_sites() || state.m.size() != p.num_sites() ||
      state.v.size() != p.num_sites()) {
    throw Error(ErrorKind::kDimension, "adam_step: site count mismatch");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t j = 0; j < p.num_sites(); ++j) {
    auto a = p.site_data(j);
    auto g = grad[j].data();
    auto m = state.m[j].data();
    auto v = state.v[j].data();
    if (g.size() != a.size() || m.size() != a.size() || v.size() != a.size()) {
      throw Error(ErrorKind::kDimension,
                  "adam_step: shape mismatch at site " + std::to_string(j));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      a[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Peps normalize_init(const Peps& p, std::size_t n_samples,
                    const ContractionSettings& s, std::mt19937_64& rng) {
  const LogNormEstimate est = estimate_log_norm(p, n_samples, s, rng);
  const double alpha =
      std::exp(-est.log_z / (2.0 * static_cast<double>(p.num_sites())));
  Peps out = p;
  for (std::size_t j = 0; j < out.num_sites(); ++j) out.scale_site(j, alpha);
  return out;
}

TrainResult train_mode(const Peps& init, std::span<const GridConfig> train_data,
                       std::span<const GridConfig> val_data,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.empty() || val_data.empty()) {
    throw Error(ErrorKind::kInput, "train_mode: empty training or validation set");
  }
  for (std::size_t i = 0; i < train_data.size(); ++i) check_grid(init, train_data[i], i);
  for (std::size_t i = 0; i < val_data.size(); ++i) check_grid(init, val_data[i], i);

  const auto& s = cfg.chi;
  const auto start = std::chrono::steady_clock::now();
  auto cap = [&](std::span<const GridConfig> d) {
    return cfg.eval_max_examples == 0 || d.size() <= cfg.eval_max_examples
               ? d
               : d.first(cfg.eval_max_examples);
  };
  const auto train_eval = cap(train_data);
  const auto val_eval = cap(val_data);

  TrainResult result;
  std::mt19937_64 init_rng(mix_seed(cfg.seed, kInitStream));
  Peps model = normalize_init(init, cfg.init_norm_samples, s, init_rng);
  result.model = model;
  if (cfg.max_iters == 0) return result;

  AdamState state = AdamState::zeros_like(model);
  std::mt19937_64 pos_rng(mix_seed(cfg.seed, kPositiveStream));
  std::uniform_int_distribution<std::size_t> pick(0, train_data.size() - 1);
  std::vector<GridConfig> batch(cfg.batch_pos);
  std::vector<double> history;
  std::size_t neg_batch = cfg.batch_neg_initial;
  bool switched = false;
  double best_val = std::numeric_limits<double>::infinity();

  auto evaluate = [&](std::size_t iter) {
    auto rng = stream_rng(mix_seed(cfg.seed, kEvalStream), iter);
    const LogNormEstimate est = estimate_log_norm(model, cfg.norm_samples, s, rng);
    TrainRecord row;
    row.iter = iter;
    row.log_z = est.log_z;
    row.log_z_stderr = est.std_err;
    row.train_nll = nll(model, train_eval, est.log_z, s);
    row.val_nll = nll(model, val_eval, est.log_z, s);
    if (cfg.record_wall_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count();
    }
    result.report.rows.push_back(row);
    if (!std::isfinite(row.train_nll) || !std::isfinite(row.val_nll)) {
      throw Error(ErrorKind::kNumeric,
                  "non-finite NLL at iteration " + std::to_string(iter));
    }
    if (row.val_nll < best_val) {
      best_val = row.val_nll;
      result.model = model;
    }
    history.push_back(row.train_nll);
    return !cfg.on_record || cfg.on_record(row);
  };

  auto plateaued = [&](std::size_t iter) {
    const auto& pc = cfg.switch_criterion;
    if (iter >= pc.max_iter) return true;
    if (history.size() <= pc.window) return false;
    const double old = history[history.size() - 1 - pc.window];
    const double now = history.back();
    return (old - now) / std::abs(old) < pc.rel_tol;
  };

  try {
    bool go_on = evaluate(0);
    for (std::size_t iter = 1; go_on && iter <= cfg.max_iters; ++iter) {
      for (auto& x : batch) x = train_data[pick(pos_rng)];
      const auto samples =
          sample_batch(model, neg_batch, s, mix_seed(cfg.seed, kNegativeStream, iter));
      const auto grad = gradient(model, batch, samples, s);
      adam_step(model, grad, state, cfg);
      if (iter % cfg.eval_interval == 0 || iter == cfg.max_iters) go_on = evaluate(iter);
      if (!switched && plateaued(iter)) {
        switched = true;
        neg_batch = cfg.batch_neg_late;
      }
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumeric && e.kind() != ErrorKind::kInfiniteNll &&
        e.kind() != ErrorKind::kDegenerate) {
      throw;
    }
    result.aborted = true;
    result.abort_reason = e.what();
  }
  return result;
}

}  // namespace pepsgen
