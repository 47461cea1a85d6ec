// Acceptance checks. Each criterion prints one PASS/FAIL line; pass the
// criterion numbers to run as arguments (all of them by default).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "pepsgen/datasets.hpp"
#include "pepsgen/mixture.hpp"
#include "pepsgen/rng.hpp"
#include "pepsgen/sampler.hpp"
#include "pepsgen/training.hpp"

using namespace pepsgen;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

const ContractionSettings kExact = ContractionSettings::exact();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- shared fixtures ----

// 8x8 binarized MNIST, in file order, with labels.
const Dataset& mnist8() {
  static const Dataset d = [] {
    const fs::path dir = PEPSGEN_DATA_DIR;
    GreyImages g = load_mnist_idx(dir / "mnist5k-images-idx3-ubyte",
                                  dir / "mnist5k-labels-idx1-ubyte");
    return binarize(downsample(g), 7);
  }();
  return d;
}

struct Subset {
  std::vector<GridConfig> train, val;
};

// The 500 images of one digit: the first 400 train, the rest validate.
Subset digit_subset(int digit) {
  const Dataset& d = mnist8();
  Subset s;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if ((*d.labels)[i] != digit) continue;
    (s.train.size() < 400 ? s.train : s.val).push_back(d.configs[i]);
  }
  return s;
}

constexpr int kOverfitDigit = 3;
constexpr std::size_t kMnistIters = 300;
constexpr double kMnistLearningRate = 0.001;

ContractionSettings mnist_chi(std::size_t bond) {
  return ContractionSettings::with_chi(bond == 2 ? 4 : 6);
}

TrainConfig mnist_config(std::size_t bond, std::size_t iters) {
  TrainConfig cfg;
  cfg.learning_rate = kMnistLearningRate;
  cfg.max_iters = iters;
  cfg.batch_pos = 100;
  cfg.batch_neg_initial = 100;
  cfg.batch_neg_late = 100;
  cfg.eval_interval = 10;
  cfg.norm_samples = 200;
  cfg.init_norm_samples = 200;
  cfg.chi = mnist_chi(bond);
  cfg.seed = 1;
  return cfg;
}

struct Fitted {
  Peps model;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double log_z = 0.0;
  double log_z_stderr = 0.0;
  std::size_t best_iter = 0;
};

// Trains one bond dimension on a digit subset and re-measures the returned
// model with a fresh, larger norm estimate.
Fitted fit_digit(int digit, std::size_t bond, std::size_t iters, std::uint64_t init_seed) {
  const Subset s = digit_subset(digit);
  TrainConfig cfg = mnist_config(bond, iters);
  const auto res = train_mode(random_peps(8, 8, 2, bond, init_seed), s.train, s.val, cfg);
  if (res.aborted) throw Error(ErrorKind::kNumeric, "training aborted: " + res.abort_reason);
  Fitted f;
  f.model = res.model;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : res.report.rows)
    if (r.val_nll < best) {
      best = r.val_nll;
      f.best_iter = r.iter;
    }
  std::mt19937_64 rng(mix_seed(99, digit, bond));
  const auto est = estimate_log_norm(f.model, 1000, cfg.chi, rng);
  f.log_z = est.log_z;
  f.log_z_stderr = est.std_err;
  f.train_nll = nll(f.model, s.train, est.log_z, cfg.chi);
  f.val_nll = nll(f.model, s.val, est.log_z, cfg.chi);
  std::printf("  digit %d D=%zu: best iter %zu, train %.4f, val %.4f, log Z stderr %.4f\n",
              digit, bond, f.best_iter, f.train_nll, f.val_nll, f.log_z_stderr);
  std::fflush(stdout);
  return f;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// ---- criteria ----

Outcome c1_exact_bars_stripes() {
  const auto t0 = Clock::now();
  const Dataset d = gen_bars_stripes(4);
  const Peps p = bars_stripes_peps(4);
  const double value = nll(p, d.configs, log_norm_exact(p), kExact);
  std::map<GridConfig, int> counts;
  for (const auto& x : d.configs) ++counts[x];
  double entropy = 0.0;
  for (const auto& [x, c] : counts) {
    const double q = static_cast<double>(c) / static_cast<double>(d.size());
    entropy -= q * std::log(q);
  }
  const double secs = seconds_since(t0);
  const bool ok = d.size() == 30 && std::abs(value - 3.4503) <= 1e-3 &&
                  std::abs(entropy - 3.4012) <= 1e-4 && secs < 5.0;
  return {ok, fmt("NLL %.5f (target 3.4503 +- 1e-3), entropy reference %.5f (3.4012), %.2f s",
                  value, entropy, secs)};
}

Outcome c2_bars_stripes_training() {
  const auto t0 = Clock::now();
  const Dataset d = gen_bars_stripes(4);
  constexpr double kTarget = 3.47;
  int reached = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;  // defaults: Adam 1e-3, batches 200 / 200 -> 1000
    cfg.max_iters = 2000;
    cfg.seed = seed;
    std::size_t stop_iter = 0;
    // Stop once a report row is safely below the target; the exact NLL of
    // the returned model decides.
    cfg.on_record = [&](const TrainRecord& r) {
      stop_iter = r.iter;
      return r.train_nll > kTarget - 2e-3;
    };
    const auto res = train_mode(random_peps(4, 4, 2, 2, 100 + seed), d.configs, d.configs, cfg);
    const double exact = nll(res.model, d.configs, log_norm_exact(res.model), kExact);
    const bool ok = !res.aborted && exact <= kTarget;
    reached += ok;
    const std::string line = fmt("seed %llu: exact NLL %.4f at iter %zu%s; ",
                                 static_cast<unsigned long long>(seed), exact, stop_iter,
                                 res.aborted ? " (aborted)" : "");
    detail += line;
    std::printf("  %s\n", line.c_str());
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  return {reached >= 2 && secs < 1800,
          detail + fmt("%d/3 reached <= 3.47, %.0f s", reached, secs)};
}

Outcome c3_ising() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  const auto xs = oracle::all_configs(3, 3, 2);
  for (double beta : {0.2, 0.5, 1.0}) {
    const Peps p = ising_peps({beta, 3, 3});
    for (const auto& x : xs) {
      const SignedLog a = amplitude(p, x, kExact);
      const double got = std::exp(2 * a.log_mag);
      const double want = std::exp(-beta * oracle::ising_energy(x));
      worst = std::max(worst, std::abs(got - want) / want);
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10,
          fmt("max relative error %.2e over 3 x 512 configurations, %.2f s", worst, secs)};
}

Outcome c4_sampler() {
  const auto t0 = Clock::now();
  // Gaussian site tensors give a peaked distribution; see the noise floor below.
  std::vector<Tensor> sites;
  const Peps shape_src = random_peps(3, 3, 2, 2, 0);
  for (std::size_t j = 0; j < 9; ++j) {
    sites.push_back(oracle::random_tensor(shape_src.site(j).shape(), 400 + j));
  }
  const Peps p(3, 3, 2, sites);
  const auto born = oracle::born_distribution(p);

  constexpr std::size_t kN = 100000;
  const ContractionSettings loose = ContractionSettings::with_chi(16);
  const auto samples = sample_batch(p, kN, loose, 2024);
  std::vector<double> freq(born.size(), 0.0);
  for (const auto& s : samples) freq[s.config.index(2)] += 1.0 / kN;
  double tvd = 0.0, floor = 0.0;
  for (std::size_t i = 0; i < born.size(); ++i) {
    tvd += 0.5 * std::abs(freq[i] - born[i]);
    floor += 0.5 * std::sqrt(2 * born[i] * (1 - born[i]) / (M_PI * kN));
  }

  const auto exact = sample_batch(p, 2000, kExact, 7);
  double lo = exact[0].log_weight, hi = lo;
  for (const auto& s : exact) {
    lo = std::min(lo, s.log_weight);
    hi = std::max(hi, s.log_weight);
  }
  const double spread = std::expm1(hi - lo);
  const double secs = seconds_since(t0);
  return {tvd < 0.02 && spread < 1e-10 && secs < 120,
          fmt("TVD %.4f at n = 1e5 (expected sampling floor %.4f), exact-conditional "
              "weight spread %.1e, %.1f s",
              tvd, floor, spread, secs)};
}

Outcome c5_gradient() {
  const auto t0 = Clock::now();
  const Peps p = random_peps(3, 3, 2, 2, 5);
  const auto all = enumerate_configs(3, 3, 2);
  std::vector<GridConfig> data;
  for (std::size_t i = 3; i < all.size(); i += 11) data.push_back(all[i]);
  std::vector<WeightedSample> model;
  for (const auto& x : all) {
    WeightedSample w;
    w.config = x;
    w.log_psi2 = 2 * amplitude(p, x, kExact).log_mag;
    w.log_weight = w.log_psi2;
    w.weight = std::exp(w.log_weight);
    model.push_back(w);
  }
  const auto grad = gradient(p, data, model, kExact);
  auto exact_nll = [&](const Peps& q) { return nll(q, data, log_norm_exact(q), kExact); };
  const double h = 1e-5;
  double worst = 0.0, diff2 = 0.0, norm2 = 0.0;
  for (std::size_t j = 0; j < p.num_sites(); ++j) {
    for (std::size_t k = 0; k < p.site(j).size(); ++k) {
      Peps a = p, b = p;
      a.site_data(j)[k] += h;
      b.site_data(j)[k] -= h;
      const double fd = (exact_nll(a) - exact_nll(b)) / (2 * h);
      const double g = grad[j][k];
      worst = std::max(worst, std::abs(fd - g) / std::max(std::abs(fd), 1e-3));
      diff2 += (fd - g) * (fd - g);
      norm2 += fd * fd;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 120,
          fmt("max entry relative error %.2e, norm relative error %.2e over %zu parameters, "
              "%.1f s",
              worst, std::sqrt(diff2 / norm2), p.num_parameters(), secs)};
}

Outcome c6_norm_estimator() {
  const auto t0 = Clock::now();
  // chi = 2 truncates the double-layer conditionals of a 3-wide grid, while
  // the single-layer amplitude behind each weight is still exact.
  const ContractionSettings s = ContractionSettings::with_chi(2);
  int failures = 0;
  std::string zs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Peps p = random_peps(3, 3, 2, 2, 600 + seed);
    std::mt19937_64 rng(seed);
    const auto est = estimate_log_norm(p, 10000, s, rng);
    const double z = (est.log_z - log_norm_exact(p)) / est.std_err;
    failures += !(std::abs(z) <= 3.0);
    zs += fmt("%s%.2f", seed == 1 ? "" : " ", z);
  }
  const double secs = seconds_since(t0);
  return {failures <= 1 && secs < 300,
          fmt("%d of 10 outside 3 std errors (z: %s), %.1f s", failures, zs.c_str(), secs)};
}

Outcome c7_cluster_separation() {
  const auto t0 = Clock::now();
  const Fitted a = fit_digit(0, 2, kMnistIters, 21);
  const Fitted b = fit_digit(1, 2, kMnistIters, 22);
  const auto s = mnist_chi(2);
  const auto pa = MixtureModel::single(a.model, a.log_z, a.log_z_stderr);
  const auto pb = MixtureModel::single(b.model, b.log_z, b.log_z_stderr);
  std::mt19937_64 rng(77);
  const double ab = median(log_ratio_samples(pa, pb, 500, s, rng));
  const double ba = median(log_ratio_samples(pb, pa, 500, s, rng));
  const double secs = seconds_since(t0);
  return {ab > 0 && ba > 0 && secs < 7200,
          fmt("digits 0 and 1 as clusters: median log(P1/P2) on P1 samples %.2f, "
              "median log(P2/P1) on P2 samples %.2f, %.0f s",
              ab, ba, secs)};
}

Outcome c8_overfitting() {
  const auto t0 = Clock::now();
  const Fitted f = fit_digit(kOverfitDigit, 2, kMnistIters, 11);
  const double gap = std::abs(f.val_nll - f.train_nll) / f.train_nll;
  const double secs = seconds_since(t0);
  return {gap < 0.10 && secs < 7200,
          fmt("digit %d, D=2, returned model: train %.3f, validation %.3f, gap %.1f%% of "
              "train, %.0f s",
              kOverfitDigit, f.train_nll, f.val_nll, 100 * gap, secs)};
}

Outcome c9_bond_dimension() {
  const auto t0 = Clock::now();
  const Fitted d2 = fit_digit(kOverfitDigit, 2, kMnistIters, 11);
  const Fitted d3 = fit_digit(kOverfitDigit, 3, kMnistIters, 11);
  const double secs = seconds_since(t0);
  return {d3.val_nll < d2.val_nll,
          fmt("digit %d validation NLL: D=2 %.3f, D=3 %.3f (%zu iterations each), %.0f s",
              kOverfitDigit, d2.val_nll, d3.val_nll, kMnistIters, secs)};
}

// Runs a command line in-process; stdout is captured as a file of its own.
int run_cli(const std::vector<std::string>& args, const fs::path& log) {
  std::vector<const char*> argv{"pepsgen"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  std::ofstream(log, std::ios::app | std::ios::binary) << out.str();
  if (rc != 0) std::fprintf(stderr, "  command failed (%d): %s\n", rc, err.str().c_str());
  return rc;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(is), {}};
  }
  return files;
}

Outcome c10_determinism() {
  const fs::path root = fs::temp_directory_path() / "pepsgen_acceptance_c10";
  fs::remove_all(root);
  const fs::path data = PEPSGEN_DATA_DIR;
  auto pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir / "bs");
    fs::create_directories(dir / "mnist");
    const fs::path log = dir / "stdout.txt";
    const std::string bs = "output.dir=" + (dir / "bs").string();
    const std::vector<std::string> quick = {
        "--set", "training.max_iters=20",  "--set", "training.eval_interval=5",
        "--set", "training.batch_pos=50",  "--set", "training.batch_neg_initial=50",
        "--set", "training.batch_neg_late=100", "--set", "training.switch_max_iter=10",
        "--set", "training.norm_samples=100", "--set", "training.init_norm_samples=100",
        "--set", "training.seed=4"};
    int rc = run_cli({"prepare", "--set", bs}, log);
    auto train = std::vector<std::string>{"train", "--set", bs};
    train.insert(train.end(), quick.begin(), quick.end());
    rc |= run_cli(train, log);
    rc |= run_cli({"sample", "--set", bs, "--set", "sampling.n=300", "--set", "sampling.seed=9"},
                  log);
    rc |= run_cli({"eval", "--set", bs, "--data", (dir / "bs" / "train.pgds").string(),
                   "--per-example", (dir / "bs" / "per_example.csv").string(), "--set",
                   "eval.norm_samples=200", "--set", "eval.seed=3"},
                  log);
    rc |= run_cli({"logratio", "--set", bs, "--p", (dir / "bs" / "mixture.txt").string(),
                   "--q", (dir / "bs" / "mode0.peps").string(), "--set", "logratio.n=200",
                   "--set", "eval.norm_samples=200"},
                  log);
    rc |= run_cli({"prepare", "--set", "output.dir=" + (dir / "mnist").string(), "--set",
                   "dataset.source=mnist", "--set",
                   "dataset.images=" + (data / "mnist5k-images-idx3-ubyte").string(), "--set",
                   "dataset.labels=" + (data / "mnist5k-labels-idx1-ubyte").string(), "--set",
                   "dataset.downsample=true", "--set", "dataset.train_count=4000", "--set",
                   "dataset.validation_count=1000", "--set", "dataset.binarize_seed=5"},
                  log);
    return rc;
  };
  const auto t0 = Clock::now();
  const int rc = pipeline(root / "a") | pipeline(root / "b");
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  std::size_t differing = 0;
  std::string names;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    // Paths inside the mixture manifest are relative, so every file compares as-is.
    if (it == b.end() || it->second != bytes) {
      ++differing;
      names += " " + name;
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  fs::remove_all(root);
  const double secs = seconds_since(t0);
  return {rc == 0 && differing == 0 && a.size() >= 20,
          fmt("%zu files from prepare/train/sample/eval/logratio, %zu differ%s, exit codes %s, "
              "%.0f s",
              a.size(), differing, names.c_str(), rc == 0 ? "all 0" : "nonzero", secs)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion> kCriteria = {
    {1, "exact bars-and-stripes NLL", c1_exact_bars_stripes},
    {2, "bars-and-stripes training", c2_bars_stripes_training},
    {3, "Ising Boltzmann weights", c3_ising},
    {4, "direct sampler distribution", c4_sampler},
    {5, "gradient vs finite differences", c5_gradient},
    {6, "stochastic norm estimate", c6_norm_estimator},
    {7, "cluster log-ratio separation", c7_cluster_separation},
    {8, "train/validation gap", c8_overfitting},
    {9, "validation NLL improves with D", c9_bond_dimension},
    {10, "CLI determinism", c10_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) {
      continue;
    }
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
