#include "pepsgen/peps.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pepsgen/boundary_mps.hpp"
#include "pepsgen/error.hpp"

namespace pepsgen {

using detail::BoundaryMps;

// ---------------------------------------------------------------- GridConfig

GridConfig::GridConfig(std::size_t height, std::size_t width,
                       std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) {
    throw Error(ErrorKind::kDimension, "grid config has " +
                                           std::to_string(values_.size()) +
                                           " values for a " +
                                           std::to_string(height) + "x" +
                                           std::to_string(width) + " grid");
  }
}

std::uint64_t GridConfig::index(std::size_t phys_dim) const {
  std::uint64_t idx = 0;
  for (std::uint8_t v : values_) idx = idx * phys_dim + v;
  return idx;
}

GridConfig GridConfig::from_index(std::uint64_t index, std::size_t height,
                                  std::size_t width, std::size_t phys_dim) {
  GridConfig x(height, width);
  for (std::size_t i = height * width; i-- > 0;) {
    x.values_[i] = static_cast<std::uint8_t>(index % phys_dim);
    index /= phys_dim;
  }
  return x;
}

std::vector<GridConfig> enumerate_configs(std::size_t height, std::size_t width,
                                          std::size_t phys_dim) {
  double count = std::pow(static_cast<double>(phys_dim),
                          static_cast<double>(height * width));
  if (count > static_cast<double>(kMaxEnumeration)) {
    throw Error(ErrorKind::kCapacity,
                "enumeration of " + std::to_string(height) + "x" +
                    std::to_string(width) + " grid exceeds 2^20 configurations");
  }
  const auto n = static_cast<std::uint64_t>(count);
  std::vector<GridConfig> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    out.push_back(GridConfig::from_index(i, height, width, phys_dim));
  }
  return out;
}

// ----------------------------------------------------------------- SignedLog

double SignedLog::value() const {
  return sign == 0 ? 0.0 : sign * std::exp(log_mag);
}

SignedLog SignedLog::from(double v) {
  if (v == 0.0) return {};
  return {v > 0 ? 1 : -1, std::log(std::abs(v))};
}

// ---------------------------------------------------------------------- Peps

Peps::Peps(std::size_t height, std::size_t width, std::size_t phys_dim,
           std::vector<Tensor> tensors)
    : height_(height),
      width_(width),
      phys_dim_(phys_dim),
      tensors_(std::move(tensors)) {
  validate();
}

void Peps::validate() const {
  if (height_ == 0 || width_ == 0 || phys_dim_ == 0) {
    throw Error(ErrorKind::kDimension, "PEPS dimensions must be positive");
  }
  if (tensors_.size() != height_ * width_) {
    throw Error(ErrorKind::kDimension, "PEPS needs " +
                                           std::to_string(height_ * width_) +
                                           " tensors, got " +
                                           std::to_string(tensors_.size()));
  }
  for (std::size_t r = 0; r < height_; ++r) {
    for (std::size_t c = 0; c < width_; ++c) {
      const Tensor& t = site(r, c);
      const std::string where =
          " at site (" + std::to_string(r) + "," + std::to_string(c) + ")";
      if (t.rank() != 5) {
        throw Error(ErrorKind::kDimension, "site tensor is not rank 5" + where);
      }
      if (t.dim(kPhys) != phys_dim_) {
        throw Error(ErrorKind::kDimension, "physical dimension mismatch" + where);
      }
      if ((r == 0 && t.dim(kUp) != 1) || (r + 1 == height_ && t.dim(kDown) != 1) ||
          (c == 0 && t.dim(kLeft) != 1) || (c + 1 == width_ && t.dim(kRight) != 1)) {
        throw Error(ErrorKind::kDimension, "boundary bond is not 1" + where);
      }
      if (r + 1 < height_ && t.dim(kDown) != site(r + 1, c).dim(kUp)) {
        throw Error(ErrorKind::kDimension, "vertical bond mismatch" + where);
      }
      if (c + 1 < width_ && t.dim(kRight) != site(r, c + 1).dim(kLeft)) {
        throw Error(ErrorKind::kDimension, "horizontal bond mismatch" + where);
      }
    }
  }
}

void Peps::set_site(std::size_t j, Tensor t) {
  if (t.shape() != tensors_.at(j).shape()) {
    throw Error(ErrorKind::kDimension, "set_site: shape change at site " +
                                           std::to_string(j));
  }
  tensors_[j] = std::move(t);
}

std::size_t Peps::vertical_bond(std::size_t r, std::size_t c) const {
  if (r == height_) return site(r - 1, c).dim(kDown);
  return site(r, c).dim(kUp);
}

std::size_t Peps::horizontal_bond(std::size_t r, std::size_t c) const {
  if (c == width_) return site(r, c - 1).dim(kRight);
  return site(r, c).dim(kLeft);
}

std::size_t Peps::max_bond() const noexcept {
  std::size_t m = 1;
  for (const auto& t : tensors_) {
    for (std::size_t ax = 0; ax < 4; ++ax) m = std::max(m, t.dim(ax));
  }
  return m;
}

std::size_t Peps::num_parameters() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::size_t resolve_chi(const ContractionSettings& s, std::size_t bond_dim) {
  if (s.chi.has_value()) return *s.chi;
  return 2 * bond_dim * bond_dim;
}

// ----------------------------------------------------------------- amplitude

namespace {

void check_config(const Peps& p, const GridConfig& x) {
  if (x.height() != p.height() || x.width() != p.width()) {
    throw Error(ErrorKind::kDimension,
                "configuration is " + std::to_string(x.height()) + "x" +
                    std::to_string(x.width()) + ", model is " +
                    std::to_string(p.height()) + "x" + std::to_string(p.width()));
  }
  for (std::uint8_t v : x.values()) {
    if (v >= p.phys_dim()) {
      throw Error(ErrorKind::kDimension, "configuration value " +
                                             std::to_string(v) +
                                             " outside physical dimension");
    }
  }
}

std::span<const Tensor> row_of(const std::vector<Tensor>& grid, std::size_t r,
                               std::size_t width) {
  return std::span<const Tensor>(grid).subspan(r * width, width);
}

SignedLog contract_grid(const std::vector<Tensor>& grid, std::size_t height,
                        std::size_t width, const detail::Truncation& trunc) {
  BoundaryMps top = detail::trivial_boundary(width);
  for (std::size_t r = 0; r < height; ++r) {
    top = detail::absorb_from_top(top, row_of(grid, r, width), trunc);
  }
  return detail::close(top, detail::trivial_boundary(width));
}

}  // namespace

SignedLog amplitude(const Peps& p, const GridConfig& x,
                    const ContractionSettings& s) {
  check_config(p, x);
  const auto grid = detail::fixed_layer(p, x);
  return contract_grid(grid, p.height(), p.width(),
                       detail::truncation_for(s, p.max_bond()));
}

double double_layer_log_norm(const Peps& p, const ContractionSettings& s) {
  std::vector<Tensor> grid;
  grid.reserve(p.num_sites());
  for (const auto& t : p.tensors()) grid.push_back(detail::traced_double(t));
  const SignedLog z = contract_grid(grid, p.height(), p.width(),
                                    detail::truncation_for(s, p.max_bond()));
  if (z.sign <= 0) {
    throw Error(ErrorKind::kNumeric,
                "double-layer contraction produced a non-positive norm");
  }
  return z.log_mag;
}

double log_norm_exact(const Peps& p) {
  const auto configs = enumerate_configs(p.height(), p.width(), p.phys_dim());
  const auto exact = ContractionSettings::exact();
  std::vector<double> logs;
  logs.reserve(configs.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (const auto& x : configs) {
    const SignedLog a = amplitude(p, x, exact);
    if (a.sign == 0) continue;
    logs.push_back(2.0 * a.log_mag);
    max_log = std::max(max_log, logs.back());
  }
  if (logs.empty()) return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - max_log);
  return max_log + std::log(sum);
}

// -------------------------------------------------------------- environments

Tensor SiteEnvironment::value() const {
  Tensor out = tensor;
  out *= std::exp(log_scale);
  return out;
}

namespace {

Tensor embed_physical(const Tensor& env4, std::size_t phys_dim, std::size_t v) {
  Tensor out({env4.dim(0), env4.dim(1), env4.dim(2), env4.dim(3), phys_dim});
  for (std::size_t i = 0; i < env4.size(); ++i) out[i * phys_dim + v] = env4[i];
  return out;
}

// Visits the environment of every site (raster order) with the scaled
// rank-4 environment and its log scale.
template <class Visitor>
void for_each_environment(const Peps& p, const GridConfig& x,
                          const ContractionSettings& s, Visitor&& visit) {
  check_config(p, x);
  const std::size_t h = p.height(), w = p.width();
  const auto grid = detail::fixed_layer(p, x);
  const auto trunc = detail::truncation_for(s, p.max_bond());

  std::vector<BoundaryMps> bottoms(h + 1);
  bottoms[h] = detail::trivial_boundary(w);
  for (std::size_t r = h; r-- > 1;) {
    bottoms[r] = detail::absorb_from_bottom(bottoms[r + 1], row_of(grid, r, w), trunc);
  }

  BoundaryMps top = detail::trivial_boundary(w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto row = row_of(grid, r, w);
    const BoundaryMps& bottom = bottoms[r + 1];
    const auto rights = detail::right_partials(top, row, bottom);
    detail::Partial left = detail::unit_partial();
    for (std::size_t c = 0; c < w; ++c) {
      const detail::Partial env = detail::site_environment(
          left, top.sites[c], rights[c], bottom.sites[c]);
      visit(r * w + c, env.tensor,
            env.log_scale + top.log_scale + bottom.log_scale);
      if (c + 1 < w) {
        left = detail::extend_left(left, top.sites[c], row[c], bottom.sites[c]);
      }
    }
    if (r + 1 < h) top = detail::absorb_from_top(top, row, trunc);
  }
}

}  // namespace

std::vector<SiteEnvironment> environments(const Peps& p, const GridConfig& x,
                                          const ContractionSettings& s) {
  std::vector<SiteEnvironment> out(p.num_sites());
  for_each_environment(p, x, s, [&](std::size_t j, const Tensor& env, double ls) {
    const std::size_t c = j % p.width(), r = j / p.width();
    out[j] = {embed_physical(env, p.phys_dim(), x(r, c)), ls};
  });
  return out;
}

std::vector<Tensor> log_derivatives(const Peps& p, const GridConfig& x,
                                    const ContractionSettings& s) {
  std::vector<Tensor> out(p.num_sites());
  for_each_environment(p, x, s, [&](std::size_t j, const Tensor& env, double) {
    const std::size_t c = j % p.width(), r = j / p.width();
    const std::size_t v = x(r, c);
    const Tensor slice = detail::physical_slice(p.site(j), v);
    const double psi_local = inner(env, slice);
    if (psi_local == 0.0 || !std::isfinite(psi_local)) {
      throw InfiniteNllError(0, "zero amplitude: log-derivative undefined");
    }
    out[j] = embed_physical(env, p.phys_dim(), v);
    out[j] *= 1.0 / psi_local;
  });
  return out;
}

// -------------------------------------------------------------- constructors

namespace {

// Builds a rank-5 site tensor from a full-bond tensor by summing each
// boundary-facing leg against the all-ones vector.
Tensor project_boundary(const Tensor& full, std::size_t r, std::size_t c,
                        std::size_t height, std::size_t width) {
  Tensor t = full;
  const std::array<bool, 4> boundary = {r == 0, c == 0, r + 1 == height,
                                        c + 1 == width};
  for (std::size_t ax = 0; ax < 4; ++ax) {
    if (!boundary[ax] || t.dim(ax) == 1) continue;
    Tensor ones({t.dim(ax)}, 1.0);
    // contraction moves the summed axis out; reinsert it as length 1
    Tensor reduced = contract(t, ones, {{ax, 0}});
    Shape shape = t.shape();
    shape[ax] = 1;
    t = std::move(reduced).reshaped(shape);
  }
  return t;
}

}  // namespace

Peps ising_peps(const IsingParams& params) {
  if (!std::isfinite(params.beta)) {
    throw Error(ErrorKind::kInput, "ising_peps: beta must be finite");
  }
  const double b = params.beta;
  const double ep = std::exp(b / 2.0), em = std::exp(-b / 2.0);
  // Edge matrix M[s,s'] = exp(beta s s' / 2); each interior edge carries M.
  double m[2][2] = {{ep, em}, {em, ep}};
  double down_leg[2][2], up_leg[2][2];
  if (b >= 0.0) {
    // Symmetric square root: eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2.
    const double s1 = std::sqrt(ep + em), s2 = std::sqrt(ep - em);
    const double bp = 0.5 * (s1 + s2), bm = 0.5 * (s1 - s2);
    double root[2][2] = {{bp, bm}, {bm, bp}};
    std::memcpy(down_leg, root, sizeof root);
    std::memcpy(up_leg, root, sizeof root);
  } else {
    // M is indefinite: no real square root, put all of M on down/right.
    double id[2][2] = {{1, 0}, {0, 1}};
    std::memcpy(down_leg, m, sizeof m);
    std::memcpy(up_leg, id, sizeof id);
  }

  const std::size_t h = params.height, w = params.width;
  std::vector<Tensor> tensors;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Copy tensor delta(p = leg index) with the leg matrix absorbed on each
      // interior leg. A boundary leg has no edge: summing the copy tensor
      // over it leaves a factor of one.
      const std::array<bool, 4> interior = {r > 0, c > 0, r + 1 < h, c + 1 < w};
      Shape shape(5, 2);
      for (std::size_t ax = 0; ax < 4; ++ax) shape[ax] = interior[ax] ? 2 : 1;
      Tensor t(shape);
      std::array<std::size_t, 5> idx{};
      for (idx[0] = 0; idx[0] < shape[0]; ++idx[0])
        for (idx[1] = 0; idx[1] < shape[1]; ++idx[1])
          for (idx[2] = 0; idx[2] < shape[2]; ++idx[2])
            for (idx[3] = 0; idx[3] < shape[3]; ++idx[3])
              for (idx[4] = 0; idx[4] < 2; ++idx[4]) {
                double v = 1.0;
                for (std::size_t ax = 0; ax < 4; ++ax) {
                  if (!interior[ax]) continue;
                  const auto& leg = (ax == kUp || ax == kLeft) ? up_leg : down_leg;
                  v *= leg[idx[kPhys]][idx[ax]];
                }
                t.at(idx) = v;
              }
      tensors.push_back(std::move(t));
    }
  }
  return Peps(h, w, 2, std::move(tensors));
}

Peps bars_stripes_peps(std::size_t side) {
  if (side == 0) throw Error(ErrorKind::kInput, "bars_stripes_peps: L >= 1");
  // Vertical legs carry "column on", horizontal legs carry "row on"; a site
  // is 1 iff its column or its row is on, never both.
  Tensor full({2, 2, 2, 2, 2});
  full.at({0, 0, 0, 0, 0}) = 1.0;
  full.at({1, 0, 1, 0, 1}) = 1.0;
  full.at({0, 1, 0, 1, 1}) = 1.0;
  std::vector<Tensor> tensors;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      tensors.push_back(project_boundary(full, r, c, side, side));
    }
  }
  return Peps(side, side, 2, std::move(tensors));
}

Peps random_peps(std::size_t height, std::size_t width, std::size_t phys_dim,
                 std::size_t bond_dim, std::uint64_t seed) {
  if (bond_dim == 0) throw Error(ErrorKind::kInput, "random_peps: D >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Tensor> tensors;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      Tensor t({r == 0 ? 1 : bond_dim, c == 0 ? 1 : bond_dim,
                r + 1 == height ? 1 : bond_dim, c + 1 == width ? 1 : bond_dim,
                phys_dim});
      for (double& v : t.data()) v = uniform(rng);
      tensors.push_back(std::move(t));
    }
  }
  return Peps(height, width, phys_dim, std::move(tensors));
}

// ------------------------------------------------------------- serialization

namespace {

constexpr std::array<char, 4> kPepsMagic = {'P', 'E', 'P', 'S'};
constexpr std::uint32_t kPepsVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::uint64_t u(int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int ch = is_.get();
      if (ch == std::char_traits<char>::eof()) {
        throw Error(ErrorKind::kFormat,
                    "model file truncated at byte " + std::to_string(offset_));
      }
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
      ++offset_;
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u(8)); }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_peps(const Peps& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kInput, "cannot write " + path.string());
  os.write(kPepsMagic.data(), kPepsMagic.size());
  put_u32(os, kPepsVersion);
  put_u64(os, p.height());
  put_u64(os, p.width());
  put_u64(os, p.phys_dim());
  for (std::size_t r = 0; r <= p.height(); ++r)
    for (std::size_t c = 0; c < p.width(); ++c) put_u64(os, p.vertical_bond(r, c));
  for (std::size_t r = 0; r < p.height(); ++r)
    for (std::size_t c = 0; c <= p.width(); ++c) put_u64(os, p.horizontal_bond(r, c));
  for (const auto& t : p.tensors())
    for (double v : t.data()) put_f64(os, v);
  if (!os) throw Error(ErrorKind::kInput, "write failed for " + path.string());
}

Peps load_peps(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kInput, "cannot open " + path.string());
  Reader in(is);
  for (char m : kPepsMagic) {
    if (static_cast<char>(in.u(1)) != m) {
      throw Error(ErrorKind::kFormat, path.string() + ": bad magic");
    }
  }
  const auto version = in.u(4);
  if (version != kPepsVersion) {
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported version " +
                                        std::to_string(version));
  }
  const std::size_t h = in.u(8), w = in.u(8), d = in.u(8);
  if (h == 0 || w == 0 || d == 0 || h > 4096 || w > 4096 || d > 256) {
    throw Error(ErrorKind::kFormat, path.string() + ": implausible dimensions");
  }
  std::vector<std::size_t> vert((h + 1) * w), horz(h * (w + 1));
  for (auto& v : vert) v = in.u(8);
  for (auto& v : horz) v = in.u(8);
  std::vector<Tensor> tensors;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      Shape shape = {vert[r * w + c], horz[r * (w + 1) + c],
                     vert[(r + 1) * w + c], horz[r * (w + 1) + c + 1], d};
      for (std::size_t dim : shape) {
        if (dim == 0 || dim > 4096) {
          throw Error(ErrorKind::kFormat, path.string() + ": bad bond table");
        }
      }
      Tensor t(shape);
      for (double& v : t.data()) v = in.f64();
      tensors.push_back(std::move(t));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::kFormat, path.string() + ": trailing bytes at offset " +
                                        std::to_string(in.offset()));
  }
  try {
    return Peps(h, w, d, std::move(tensors));
  } catch (const Error& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

}  // namespace pepsgen
