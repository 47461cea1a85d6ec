#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "pepsgen/datasets.hpp"
#include "pepsgen/mixture.hpp"
#include "pepsgen/rng.hpp"
#include "pepsgen/sampler.hpp"

namespace pepsgen::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKnownKeys = {
    "dataset.source",        "dataset.side",
    "dataset.images",        "dataset.labels",
    "dataset.test_images",   "dataset.test_labels",
    "dataset.binarize_seed", "dataset.downsample",
    "dataset.train_count",   "dataset.validation_count",
    "dataset.modes",         "dataset.cluster_file",
    "model.d",               "model.D",
    "model.H",               "model.W",
    "training.learning_rate", "training.beta1",
    "training.beta2",        "training.eps",
    "training.batch_pos",    "training.batch_neg_initial",
    "training.batch_neg_late", "training.switch_window",
    "training.switch_rel_tol", "training.switch_max_iter",
    "training.max_iters",    "training.eval_interval",
    "training.norm_samples", "training.init_norm_samples",
    "training.eval_max_examples", "training.chi",
    "training.seed",         "training.record_wall_time",
    "sampling.n",            "sampling.chi",
    "sampling.seed",         "eval.norm_samples",
    "eval.seed",             "eval.chi",
    "eval.exact_norm",       "logratio.n",
    "logratio.seed",         "logratio.bins",
    "output.dir",
};

constexpr const char* kModesMagic = "pepsgen-modes";
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kMixtureStream = 0x3a11;

[[noreturn]] void input_error(const std::string& what) {
  throw Error(ErrorKind::kInput, what);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

fs::path mode_file(const fs::path& dir, std::size_t k, const std::string& suffix) {
  return dir / ("mode" + std::to_string(k) + suffix);
}

struct ModeInfo {
  std::int64_t id = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
};

void save_modes(const fs::path& path, const std::string& source,
                const std::vector<ModeInfo>& modes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) input_error("cannot write " + path.string());
  os << kModesMagic << " 1\nsource " << source << "\nmodes " << modes.size()
     << "\n# mode id train validation\n";
  for (std::size_t k = 0; k < modes.size(); ++k) {
    os << k << ' ' << modes[k].id << ' ' << modes[k].train << ' '
       << modes[k].validation << '\n';
  }
}

std::vector<ModeInfo> load_modes(const fs::path& path) {
  std::ifstream is(path);
  if (!is) input_error("cannot open " + path.string() + " (run prepare first)");
  std::string magic, key, source;
  int version = 0;
  std::size_t m = 0;
  is >> magic >> version >> key >> source;
  if (magic != kModesMagic || version != 1 || key != "source") {
    throw Error(ErrorKind::kFormat, path.string() + ": not a mode manifest");
  }
  is >> key >> m;
  if (key != "modes") throw Error(ErrorKind::kFormat, path.string() + ": missing mode count");
  std::vector<ModeInfo> out;
  std::string line;
  while (out.size() < m && std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t k = 0;
    ModeInfo info;
    if (!(ls >> k >> info.id >> info.train >> info.validation) || k != out.size()) {
      throw Error(ErrorKind::kFormat, path.string() + ": bad mode line '" + line + "'");
    }
    out.push_back(info);
  }
  if (out.size() != m) throw Error(ErrorKind::kFormat, path.string() + ": truncated");
  return out;
}

void write_pgm(const fs::path& path, const std::vector<GridConfig>& configs,
               std::size_t h, std::size_t w) {
  constexpr std::size_t kPerRow = 10;
  constexpr std::uint8_t kBorder = 128;
  const std::size_t n = configs.size();
  const std::size_t cols = std::min(n, kPerRow);
  const std::size_t rows = (n + kPerRow - 1) / kPerRow;
  const std::size_t width = n == 0 ? 0 : cols * (w + 1) + 1;
  const std::size_t height = n == 0 ? 0 : rows * (h + 1) + 1;
  std::vector<std::uint8_t> img(width * height, kBorder);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r0 = (i / kPerRow) * (h + 1) + 1, c0 = (i % kPerRow) * (w + 1) + 1;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        img[(r0 + r) * width + c0 + c] = configs[i](r, c) ? 255 : 0;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) input_error("cannot write " + path.string());
  os << "P5\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data()),
           static_cast<std::streamsize>(img.size()));
}

// A bare model becomes a one-mode mixture whose log Z is estimated (or
// computed exactly when requested).
MixtureModel load_model(const fs::path& path, const RunConfig& cfg,
                        const ContractionSettings& s, bool need_norm) {
  const bool exact = cfg.flag("eval.exact_norm", false);
  if (is_mixture_manifest(path)) {
    MixtureModel mm = load_mixture_manifest(path);
    if (!exact) return mm;
    std::vector<MixtureMode> modes = mm.modes();
    for (auto& m : modes) {
      m.log_z = double_layer_log_norm(m.peps, ContractionSettings::exact());
      m.log_z_stderr = 0.0;
    }
    return MixtureModel(std::move(modes));
  }
  Peps p = load_peps(path);
  if (!need_norm) return MixtureModel::single(std::move(p), 0.0);
  if (exact) {
    const double lz = double_layer_log_norm(p, ContractionSettings::exact());
    return MixtureModel::single(std::move(p), lz);
  }
  std::mt19937_64 rng(cfg.seed("eval.seed", 0));
  const auto est = estimate_log_norm(p, cfg.count("eval.norm_samples", 1000), s, rng);
  return MixtureModel::single(std::move(p), est.log_z, est.std_err);
}

double empirical_entropy(const std::vector<GridConfig>& data) {
  std::map<GridConfig, std::size_t> counts;
  for (const auto& x : data) ++counts[x];
  const double n = static_cast<double>(data.size());
  double h = 0.0;
  for (const auto& [x, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

// ---- commands ----

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.output_dir();
  fs::create_directories(dir);
  const std::string source = cfg.text("dataset.source", "bars_stripes");
  Dataset train, validation;
  std::optional<Dataset> test;
  ModeSplit train_modes, val_modes;

  if (source == "bars_stripes") {
    train = gen_bars_stripes(cfg.count("dataset.side", 4));
    validation = train;
    validation.split = Split::kValidation;
    std::vector<std::int64_t> zeros(train.size(), 0);
    train_modes = split_by_assignment(train, zeros);
    val_modes = split_by_assignment(validation, zeros);
  } else if (source == "mnist") {
    const auto images = cfg.find("dataset.images");
    if (!images) input_error("dataset.images is required for the mnist source");
    const auto labels = cfg.find("dataset.labels");
    GreyImages g = load_mnist_idx(*images, labels ? std::optional<fs::path>(*labels)
                                                  : std::nullopt);
    const bool down = cfg.flag("dataset.downsample", false);
    if (down) g = downsample(g);
    const std::uint64_t seed = cfg.seed("dataset.binarize_seed", 0);
    const Dataset all = binarize(g, seed);
    const std::size_t n_train = cfg.count("dataset.train_count", 50000);
    const std::size_t n_val = cfg.count("dataset.validation_count", 10000);
    if (n_train + n_val > all.size()) {
      input_error("dataset has " + std::to_string(all.size()) +
                  " images, fewer than train_count + validation_count = " +
                  std::to_string(n_train + n_val));
    }
    train = slice(all, 0, n_train, Split::kTrain);
    validation = slice(all, n_train, n_train + n_val, Split::kValidation);

    const std::string modes =
        cfg.text("dataset.modes", all.labels ? "label" : "single");
    std::vector<std::int64_t> assign;
    if (modes == "label") {
      if (!all.labels) input_error("dataset.modes = label needs dataset.labels");
      assign.assign(all.labels->begin(), all.labels->end());
    } else if (modes == "cluster") {
      const auto file = cfg.find("dataset.cluster_file");
      if (!file) input_error("dataset.modes = cluster needs dataset.cluster_file");
      if (!fs::exists(*file)) input_error("cluster file not found: " + *file);
      assign = read_cluster_file(*file, n_train + n_val);
    } else if (modes == "single") {
      assign.assign(n_train + n_val, 0);
    } else {
      input_error("dataset.modes must be label, cluster or single");
    }
    assign.resize(n_train + n_val);
    train_modes = split_by_assignment(
        train, std::span<const std::int64_t>(assign).first(n_train));
    val_modes = split_by_assignment(
        validation, std::span<const std::int64_t>(assign).subspan(n_train));

    if (const auto ti = cfg.find("dataset.test_images")) {
      const auto tl = cfg.find("dataset.test_labels");
      GreyImages tg = load_mnist_idx(*ti, tl ? std::optional<fs::path>(*tl) : std::nullopt);
      if (down) tg = downsample(tg);
      test = binarize(tg, seed, all.size());
      test->split = Split::kTest;
    }
  } else {
    input_error("dataset.source must be bars_stripes or mnist, got '" + source + "'");
  }

  // Modes are keyed by the ids present in the training split.
  std::vector<ModeInfo> infos;
  for (std::size_t k = 0; k < train_modes.modes.size(); ++k) {
    ModeInfo info{train_modes.mode_ids[k], train_modes.modes[k].size(), 0};
    save_dataset(train_modes.modes[k], mode_file(dir, k, ".train.pgds"));
    Dataset val = Dataset{train.height, train.width, train.phys_dim, {}, std::nullopt,
                          Split::kValidation, train.binarize_seed};
    if (train.labels) val.labels.emplace();
    for (std::size_t v = 0; v < val_modes.mode_ids.size(); ++v) {
      if (val_modes.mode_ids[v] == info.id) val = val_modes.modes[v];
    }
    info.validation = val.size();
    save_dataset(val, mode_file(dir, k, ".validation.pgds"));
    infos.push_back(info);
  }
  save_dataset(train, dir / "train.pgds");
  save_dataset(validation, dir / "validation.pgds");
  if (test) save_dataset(*test, dir / "test.pgds");
  save_modes(dir / "modes.txt", source, infos);

  out << "train " << train.size() << "\nvalidation " << validation.size() << '\n';
  if (test) out << "test " << test->size() << '\n';
  out << "modes " << infos.size() << '\n';
  for (std::size_t k = 0; k < infos.size(); ++k) {
    out << "mode " << k << " id " << infos[k].id << " train " << infos[k].train
        << " validation " << infos[k].validation << '\n';
  }
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::size_t k, std::ostream& out, std::ostream& err) {
  const fs::path dir = cfg.output_dir();
  const auto infos = load_modes(dir / "modes.txt");
  if (k >= infos.size()) {
    input_error("mode " + std::to_string(k) + " out of range; " +
                std::to_string(infos.size()) + " modes prepared");
  }
  const Dataset train = load_dataset(mode_file(dir, k, ".train.pgds"));
  const Dataset val = load_dataset(mode_file(dir, k, ".validation.pgds"));
  if (train.size() == 0) throw Error(ErrorKind::kEmptyMode, "mode has no training data");
  if (val.size() == 0) input_error("mode " + std::to_string(k) + " has no validation data");

  const std::size_t d = cfg.count("model.d", train.phys_dim);
  const std::size_t bond = cfg.count("model.D", 2);
  if (d != train.phys_dim || cfg.count("model.H", train.height) != train.height ||
      cfg.count("model.W", train.width) != train.width) {
    throw Error(ErrorKind::kDimension, "model.d/H/W disagree with the prepared data (" +
                                          std::to_string(train.height) + "x" +
                                          std::to_string(train.width) + ", d=" +
                                          std::to_string(train.phys_dim) + ")");
  }
  if (bond == 0) input_error("model.D must be positive");

  TrainConfig tc = cfg.training();
  const std::uint64_t base_seed = tc.seed;
  tc.seed = mix_seed(base_seed, k);
  const Peps init = random_peps(train.height, train.width, d, bond,
                                mix_seed(base_seed, kInitStream, k));
  const TrainResult res = train_mode(init, train.configs, val.configs, tc);

  save_peps(res.model, mode_file(dir, k, ".peps"));
  {
    std::ofstream os(mode_file(dir, k, ".report.csv"), std::ios::binary | std::ios::trunc);
    if (!os) input_error("cannot write report");
    res.report.write_csv(os);
  }
  if (!res.report.rows.empty()) {
    const auto& last = res.report.rows.back();
    out << "final iter " << last.iter << " train_nll " << real(last.train_nll)
        << " val_nll " << real(last.val_nll) << '\n';
  }
  if (res.aborted) {
    err << "training aborted: " << res.abort_reason << '\n';
    return kNumericError;
  }

  // Once every mode has a model, publish the mixture.
  std::vector<Peps> models;
  std::vector<std::size_t> counts;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const fs::path p = mode_file(dir, i, ".peps");
    if (!fs::exists(p)) return kOk;
    models.push_back(load_peps(p));
    counts.push_back(infos[i].train);
    names.push_back(p.filename().string());
  }
  std::mt19937_64 rng(mix_seed(base_seed, kMixtureStream));
  MixtureModel built = build_mixture(counts, std::move(models), tc.norm_samples, tc.chi, rng);
  std::vector<MixtureMode> modes = built.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) modes[i].id = infos[i].id;
  save_mixture_manifest(dir / "mixture.txt", MixtureModel(std::move(modes)), names);
  out << "mixture written with " << infos.size() << " modes\n";
  return kOk;
}

fs::path model_path(const RunConfig& cfg, const std::string& flag) {
  return flag.empty() ? cfg.output_dir() / "mixture.txt" : fs::path(flag);
}

int cmd_sample(const RunConfig& cfg, const std::string& model_flag,
               const std::string& out_flag, std::ostream& out) {
  const auto s = cfg.chi("sampling.chi");
  const MixtureModel mm = load_model(model_path(cfg, model_flag), cfg, s, false);
  const std::size_t n = cfg.count("sampling.n", 100);
  const std::uint64_t seed = cfg.seed("sampling.seed", 0);
  const fs::path prefix = out_flag.empty() ? cfg.output_dir() / "samples" : fs::path(out_flag);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());

  Dataset d;
  d.height = mm.height();
  d.width = mm.width();
  d.phys_dim = mm.phys_dim();
  d.labels.emplace();
  std::vector<std::size_t> per_mode(mm.size(), 0);
  if (n > 0) {
    const MixtureSampler sampler(mm, s);
    for (std::size_t i = 0; i < n; ++i) {
      auto rng = stream_rng(seed, i);
      auto draw = sampler.draw(rng);
      ++per_mode[draw.mode];
      d.configs.push_back(std::move(draw.sample.config));
      d.labels->push_back(static_cast<std::int32_t>(draw.mode));
    }
  }
  save_dataset(d, prefix.string() + ".pgds");
  write_pgm(prefix.string() + ".pgm", d.configs, d.height, d.width);
  out << "samples " << n << '\n';
  for (std::size_t k = 0; k < per_mode.size(); ++k) {
    out << "mode " << k << ' ' << per_mode[k] << '\n';
  }
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_flag,
             const std::string& data_flag, const std::string& per_example,
             std::ostream& out) {
  const auto s = cfg.chi("eval.chi");
  const MixtureModel mm = load_model(model_path(cfg, model_flag), cfg, s, true);
  const fs::path data_path = data_flag.empty() ? cfg.output_dir() / "test.pgds"
                                               : fs::path(data_flag);
  const Dataset data = load_dataset(data_path);
  if (data.size() == 0) input_error("evaluation data is empty");
  if (data.height != mm.height() || data.width != mm.width() ||
      data.phys_dim != mm.phys_dim()) {
    throw Error(ErrorKind::kDimension, "data and model dimensions differ");
  }

  bool classify_ok = data.labels.has_value() && mm.size() > 1;
  for (const auto& m : mm.modes()) classify_ok = classify_ok && m.id >= 0;

  std::ofstream csv;
  if (!per_example.empty()) {
    csv.open(per_example, std::ios::binary | std::ios::trunc);
    if (!csv) input_error("cannot write " + per_example);
    csv << (classify_ok ? "index,log_prob,label,predicted\n" : "index,log_prob\n");
  }
  double sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double lp = mixture_log_prob(mm, data.configs[i], s);
    sum += lp;
    if (csv.is_open()) csv << i << ',' << real(lp);
    if (classify_ok) {
      std::int64_t predicted = -1;
      if (std::isfinite(lp)) predicted = mm.mode(classify(mm, data.configs[i], s)).id;
      if (predicted == (*data.labels)[i]) ++correct;
      if (csv.is_open()) csv << ',' << (*data.labels)[i] << ',' << predicted;
    }
    if (csv.is_open()) csv << '\n';
  }
  double stderr_max = 0.0;
  for (const auto& m : mm.modes()) stderr_max = std::max(stderr_max, m.log_z_stderr);
  const double nll_value = -sum / static_cast<double>(data.size());
  out << "examples " << data.size() << '\n'
      << "nll " << real(nll_value) << '\n'
      << "log_z_stderr " << real(stderr_max) << '\n'
      << "entropy_reference " << real(empirical_entropy(data.configs)) << '\n';
  if (classify_ok) {
    out << "accuracy " << real(static_cast<double>(correct) / static_cast<double>(data.size()))
        << '\n';
  }
  return std::isfinite(nll_value) ? kOk : kNumericError;
}

int cmd_logratio(const RunConfig& cfg, const std::string& p_flag, const std::string& q_flag,
                 const std::string& out_flag, std::ostream& out) {
  const auto s = cfg.chi("sampling.chi");
  const MixtureModel p = load_model(p_flag, cfg, s, true);
  const MixtureModel q = load_model(q_flag, cfg, s, true);
  const std::size_t n = cfg.count("logratio.n", 1000);
  const std::size_t bins = cfg.count("logratio.bins", 40);
  if (bins == 0) input_error("logratio.bins must be positive");
  std::mt19937_64 rng(cfg.seed("logratio.seed", 0));
  const auto ratios = log_ratio_samples(p, q, n, s, rng);
  const auto summary = summarize_log_ratios(ratios);

  const fs::path prefix = out_flag.empty() ? cfg.output_dir() / "logratio" : fs::path(out_flag);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  {
    std::ofstream os(prefix.string() + ".ratios.csv", std::ios::binary | std::ios::trunc);
    if (!os) input_error("cannot write " + prefix.string() + ".ratios.csv");
    os << "index,log_ratio\n";
    for (std::size_t i = 0; i < ratios.size(); ++i) os << i << ',' << real(ratios[i]) << '\n';
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double r : ratios) {
    if (std::isfinite(r)) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  if (!(lo <= hi)) lo = hi = 0.0;
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<std::size_t> hist(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double r : ratios) {
    if (!std::isfinite(r)) continue;
    auto b = static_cast<std::size_t>((r - lo) / width);
    ++hist[std::min(b, bins - 1)];
  }
  {
    std::ofstream os(prefix.string() + ".hist.csv", std::ios::binary | std::ios::trunc);
    if (!os) input_error("cannot write " + prefix.string() + ".hist.csv");
    os << "bin_left,bin_right,count\n";
    for (std::size_t b = 0; b < bins; ++b) {
      os << real(lo + width * static_cast<double>(b)) << ','
         << real(lo + width * static_cast<double>(b + 1)) << ',' << hist[b] << '\n';
    }
  }
  out << "samples " << summary.n << '\n'
      << "mean " << real(summary.mean) << '\n'
      << "median " << real(summary.median) << '\n'
      << "infinite " << summary.infinite << '\n';
  return kOk;
}

}  // namespace

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInput:
    case ErrorKind::kDimension:
    case ErrorKind::kIndex:
    case ErrorKind::kEmptyMode:
      return kInputError;
    case ErrorKind::kFormat:
      return kFormatError;
    case ErrorKind::kNumeric:
    case ErrorKind::kDegenerate:
    case ErrorKind::kInfiniteNll:
    case ErrorKind::kNoSupport:
      return kNumericError;
    case ErrorKind::kCapacity:
      return kCapacityError;
  }
  return kOther;
}

RunConfig RunConfig::from_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) input_error("cannot open config " + path.string());
  return parse(is, path.string());
}

RunConfig RunConfig::parse(std::istream& is, const std::string& source) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      input_error(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      input_error(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) input_error("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!kKnownKeys.contains(key)) input_error("unknown config key '" + key + "'");
  values_[key] = value;
}

std::optional<std::string> RunConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::text(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double RunConfig::real(const std::string& key, double fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double x = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return x;
  } catch (const std::logic_error&) {
    input_error(key + ": expected a number, got '" + *v + "'");
  }
}

std::size_t RunConfig::count(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(seed(key, fallback));
}

std::uint64_t RunConfig::seed(const std::string& key, std::uint64_t fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument(key);
    const auto x = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return x;
  } catch (const std::logic_error&) {
    input_error(key + ": expected a non-negative integer, got '" + *v + "'");
  }
}

bool RunConfig::flag(const std::string& key, bool fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  input_error(key + ": expected true or false, got '" + *v + "'");
}

ContractionSettings RunConfig::chi(const std::string& key) const {
  const auto v = find(key);
  if (!v || *v == "default") return {};
  if (*v == "exact") return ContractionSettings::exact();
  const auto n = seed(key, 0);
  if (n == 0) input_error(key + ": use 'exact' for no truncation");
  return ContractionSettings::with_chi(n);
}

fs::path RunConfig::output_dir() const { return text("output.dir", "out"); }

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.learning_rate = real("training.learning_rate", t.learning_rate);
  t.beta1 = real("training.beta1", t.beta1);
  t.beta2 = real("training.beta2", t.beta2);
  t.eps = real("training.eps", t.eps);
  t.batch_pos = count("training.batch_pos", t.batch_pos);
  t.batch_neg_initial = count("training.batch_neg_initial", t.batch_neg_initial);
  t.batch_neg_late = count("training.batch_neg_late", t.batch_neg_late);
  t.switch_criterion.window = count("training.switch_window", t.switch_criterion.window);
  t.switch_criterion.rel_tol = real("training.switch_rel_tol", t.switch_criterion.rel_tol);
  t.switch_criterion.max_iter = count("training.switch_max_iter", t.switch_criterion.max_iter);
  t.max_iters = count("training.max_iters", t.max_iters);
  t.eval_interval = count("training.eval_interval", t.eval_interval);
  t.norm_samples = count("training.norm_samples", t.norm_samples);
  t.init_norm_samples = count("training.init_norm_samples", t.init_norm_samples);
  t.eval_max_examples = count("training.eval_max_examples", t.eval_max_examples);
  t.chi = chi("training.chi");
  t.seed = seed("training.seed", t.seed);
  t.record_wall_time = flag("training.record_wall_time", t.record_wall_time);
  t.validate();
  return t;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PEPS Born machines for binary grid data"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("--set", overrides, "override a config key (key=value)");
  };

  auto* prepare = app.add_subcommand("prepare", "build dataset caches and mode splits");
  common(prepare);

  std::size_t mode = 0;
  auto* train = app.add_subcommand("train", "train one mode");
  common(train);
  train->add_option("-m,--mode", mode, "mode index");

  std::string model, out_prefix, data, per_example, p_model, q_model;
  auto* sample = app.add_subcommand("sample", "draw samples from a model or mixture");
  common(sample);
  sample->add_option("--model", model, "model file or mixture manifest");
  sample->add_option("-o,--out", out_prefix, "output prefix");

  auto* eval = app.add_subcommand("eval", "NLL of a dataset cache under a model");
  common(eval);
  eval->add_option("--model", model, "model file or mixture manifest");
  eval->add_option("--data", data, "dataset cache");
  eval->add_option("--per-example", per_example, "per-example CSV output");

  auto* logratio = app.add_subcommand("logratio", "log P(x) - log Q(x) on samples of P");
  common(logratio);
  logratio->add_option("--p", p_model, "model P")->required();
  logratio->add_option("--q", q_model, "model Q")->required();
  logratio->add_option("-o,--out", out_prefix, "output prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kInputError;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.set(o);
    if (prepare->parsed()) return cmd_prepare(cfg, out);
    if (train->parsed()) return cmd_train(cfg, mode, out, err);
    if (sample->parsed()) return cmd_sample(cfg, model, out_prefix, out);
    if (eval->parsed()) return cmd_eval(cfg, model, data, per_example, out);
    if (logratio->parsed()) return cmd_logratio(cfg, p_model, q_model, out_prefix, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error (input): " << e.what() << '\n';
    return kInputError;
  } catch (const std::bad_alloc&) {
    err << "error (capacity): out of memory\n";
    return kCapacityError;
  }
  return kOther;
}

}  // namespace pepsgen::cli
