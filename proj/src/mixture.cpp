#include "pepsgen/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pepsgen/error.hpp"

namespace pepsgen {

namespace {

constexpr const char* kManifestMagic = "pepsgen-mixture";
constexpr int kManifestVersion = 1;
constexpr double kWeightTol = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_dims(const MixtureModel& mm, const GridConfig& x) {
  if (x.height() != mm.height() || x.width() != mm.width()) {
    throw Error(ErrorKind::kDimension,
                "configuration is " + std::to_string(x.height()) + "x" +
                    std::to_string(x.width()) + ", mixture is " +
                    std::to_string(mm.height()) + "x" + std::to_string(mm.width()));
  }
}

std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

MixtureModel::MixtureModel(std::vector<MixtureMode> modes) : modes_(std::move(modes)) {
  if (modes_.empty()) throw Error(ErrorKind::kInput, "mixture needs at least one mode");
  double total = 0.0;
  const Peps& first = modes_.front().peps;
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    const auto& m = modes_[i];
    if (!(m.weight > 0.0)) {
      throw Error(ErrorKind::kInput, "mode " + std::to_string(i) + " has weight <= 0");
    }
    if (m.peps.height() != first.height() || m.peps.width() != first.width() ||
        m.peps.phys_dim() != first.phys_dim()) {
      throw Error(ErrorKind::kInput,
                  "mode " + std::to_string(i) + " differs in H, W or d from mode 0");
    }
    total += m.weight;
  }
  if (std::abs(total - 1.0) > kWeightTol) {
    throw Error(ErrorKind::kInput, "mixture weights sum to " + real17(total));
  }
}

MixtureModel MixtureModel::single(Peps p, double log_z, double log_z_stderr) {
  std::vector<MixtureMode> modes(1);
  modes[0].peps = std::move(p);
  modes[0].log_z = log_z;
  modes[0].log_z_stderr = log_z_stderr;
  return MixtureModel(std::move(modes));
}

double mode_log_prob(const MixtureMode& m, const GridConfig& x,
                     const ContractionSettings& s) {
  const SignedLog a = amplitude(m.peps, x, s);
  return a.sign == 0 ? kNegInf : 2.0 * a.log_mag - m.log_z;
}

double mixture_log_prob(const MixtureModel& mm, const GridConfig& x,
                        const ContractionSettings& s) {
  check_dims(mm, x);
  std::vector<double> terms;
  terms.reserve(mm.size());
  double hi = kNegInf;
  for (const auto& m : mm.modes()) {
    const double t = std::log(m.weight) + mode_log_prob(m, x, s);
    terms.push_back(t);
    hi = std::max(hi, t);
  }
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - hi);
  return hi + std::log(sum);
}

std::size_t classify(const MixtureModel& mm, const GridConfig& x,
                     const ContractionSettings& s) {
  check_dims(mm, x);
  std::size_t best = 0;
  double best_lp = kNegInf;
  for (std::size_t i = 0; i < mm.size(); ++i) {
    const auto& m = mm.mode(i);
    const double lp = std::log(m.weight) + mode_log_prob(m, x, s);
    if (lp > best_lp) {
      best_lp = lp;
      best = i;
    }
  }
  if (best_lp == kNegInf) {
    throw Error(ErrorKind::kNoSupport, "no mode assigns nonzero probability");
  }
  return best;
}

MixtureSampler::MixtureSampler(const MixtureModel& mm, const ContractionSettings& s)
    : mm_(&mm) {
  samplers_.reserve(mm.size());
  double acc = 0.0;
  for (const auto& m : mm.modes()) {
    samplers_.emplace_back(m.peps, s);
    acc += m.weight;
    cumulative_.push_back(acc);
  }
}

MixtureSampler::Draw MixtureSampler::draw(std::mt19937_64& rng) const {
  Draw out;
  if (samplers_.size() > 1) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) *
                     cumulative_.back();
    out.mode = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
        cumulative_.begin());
    out.mode = std::min(out.mode, samplers_.size() - 1);
  }
  out.sample = samplers_[out.mode].draw(rng);
  return out;
}

std::vector<double> log_ratio_samples(const MixtureModel& p, const MixtureModel& q,
                                      std::size_t n, const ContractionSettings& s,
                                      std::mt19937_64& rng) {
  if (p.height() != q.height() || p.width() != q.width() ||
      p.phys_dim() != q.phys_dim()) {
    throw Error(ErrorKind::kDimension, "log ratio: P and Q differ in H, W or d");
  }
  const MixtureSampler sampler(p, s);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GridConfig x = sampler.draw(rng).sample.config;
    const double lp = mixture_log_prob(p, x, s);
    const double lq = mixture_log_prob(q, x, s);
    if (lp == kNegInf) {
      out.push_back(lq == kNegInf ? 0.0 : kNegInf);
    } else {
      out.push_back(lp - lq);
    }
  }
  return out;
}

LogRatioSummary summarize_log_ratios(std::span<const double> ratios) {
  LogRatioSummary out;
  out.n = ratios.size();
  if (ratios.empty()) return out;
  double sum = 0.0;
  std::size_t finite = 0;
  for (double r : ratios) {
    if (std::isfinite(r)) {
      sum += r;
      ++finite;
    } else if (r > 0) {
      ++out.infinite;
    }
  }
  out.mean = finite > 0 ? sum / static_cast<double>(finite)
                        : std::numeric_limits<double>::quiet_NaN();
  std::vector<double> sorted(ratios.begin(), ratios.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  out.median = k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  if (std::isnan(out.median)) out.median = sorted[k / 2];  // inf - inf midpoint
  return out;
}

MixtureModel build_mixture(std::span<const std::size_t> counts,
                           std::vector<Peps> trained, std::size_t norm_samples,
                           const ContractionSettings& s, std::mt19937_64& rng) {
  if (counts.size() != trained.size()) {
    throw Error(ErrorKind::kInput, "build_mixture: " + std::to_string(counts.size()) +
                                       " counts for " + std::to_string(trained.size()) +
                                       " models");
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw Error(ErrorKind::kEmptyMode, "mode " + std::to_string(i) + " is empty");
    }
    total += counts[i];
  }
  std::vector<MixtureMode> modes(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    modes[i].count = counts[i];
    modes[i].weight = static_cast<double>(counts[i]) / static_cast<double>(total);
    const LogNormEstimate est = estimate_log_norm(trained[i], norm_samples, s, rng);
    modes[i].log_z = est.log_z;
    modes[i].log_z_stderr = est.std_err;
    modes[i].peps = std::move(trained[i]);
  }
  return MixtureModel(std::move(modes));
}

void save_mixture_manifest(const std::filesystem::path& manifest,
                           const MixtureModel& mm,
                           std::span<const std::string> model_paths) {
  if (model_paths.size() != mm.size()) {
    throw Error(ErrorKind::kInput, "manifest: one model path per mode required");
  }
  std::ofstream os(manifest, std::ios::binary);
  if (!os) throw Error(ErrorKind::kInput, "cannot write " + manifest.string());
  os << kManifestMagic << ' ' << kManifestVersion << '\n';
  os << "modes " << mm.size() << '\n';
  os << "# weight count id log_z log_z_stderr path\n";
  for (std::size_t i = 0; i < mm.size(); ++i) {
    const auto& m = mm.mode(i);
    os << real17(m.weight) << ' ' << m.count << ' ' << m.id << ' ' << real17(m.log_z) << ' '
       << real17(m.log_z_stderr) << ' ' << model_paths[i] << '\n';
  }
  if (!os) throw Error(ErrorKind::kInput, "write failed: " + manifest.string());
}

MixtureModel load_mixture_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest, std::ios::binary);
  if (!is) throw Error(ErrorKind::kInput, "cannot open " + manifest.string());
  auto fail = [&](std::size_t line, const std::string& what) {
    throw Error(ErrorKind::kFormat,
                manifest.string() + ":" + std::to_string(line) + ": " + what);
  };
  std::string line;
  std::string magic;
  int version = 0;
  if (!std::getline(is, line) || !(std::istringstream(line) >> magic >> version) ||
      magic != kManifestMagic) {
    fail(1, "not a mixture manifest");
  }
  if (version != kManifestVersion) fail(1, "unsupported version " + std::to_string(version));
  std::size_t m = 0;
  {
    std::string key;
    if (!std::getline(is, line) || !(std::istringstream(line) >> key >> m) ||
        key != "modes" || m == 0) {
      fail(2, "expected 'modes <count>'");
    }
  }
  const auto base = manifest.parent_path();
  std::vector<MixtureMode> modes;
  std::size_t lineno = 2;
  while (modes.size() < m && std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MixtureMode mode;
    std::string path;
    if (!(ls >> mode.weight >> mode.count >> mode.id >> mode.log_z >> mode.log_z_stderr)) {
      fail(lineno, "expected weight count id log_z log_z_stderr path");
    }
    std::getline(ls >> std::ws, path);
    if (path.empty()) fail(lineno, "missing model path");
    std::filesystem::path p(path);
    mode.peps = load_peps(p.is_absolute() ? p : base / p);
    modes.push_back(std::move(mode));
  }
  if (modes.size() != m) fail(lineno, "manifest lists fewer modes than declared");
  try {
    return MixtureModel(std::move(modes));
  } catch (const Error& e) {
    throw Error(ErrorKind::kFormat, manifest.string() + ": " + e.what());
  }
}

bool is_mixture_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::string word;
  return is && (is >> word) && word == kManifestMagic;
}

}  // namespace pepsgen
