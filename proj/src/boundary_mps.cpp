#include "pepsgen/boundary_mps.hpp"

#include <algorithm>
#include <cmath>

#include "pepsgen/error.hpp"

namespace pepsgen::detail {

std::size_t BoundaryMps::max_bond() const {
  std::size_t m = 1;
  for (const auto& t : sites) m = std::max({m, t.dim(0), t.dim(2)});
  return m;
}

Truncation truncation_for(const ContractionSettings& s, std::size_t bond_dim) {
  return {resolve_chi(s, bond_dim), s.rel_tol, s.log_scale};
}

BoundaryMps trivial_boundary(std::size_t width) {
  BoundaryMps mps;
  mps.sites.assign(width, Tensor({1, 1, 1}, 1.0));
  return mps;
}

double normalize_max(Tensor& t) {
  const double m = t.max_abs();
  if (m == 0.0 || !std::isfinite(m)) return 0.0;
  t *= 1.0 / m;
  return std::log(m);
}

namespace {

void rescale_sites(BoundaryMps& mps, bool rescale) {
  if (!rescale) return;
  for (auto& t : mps.sites) mps.log_scale += normalize_max(t);
}

void check_row(std::size_t width, std::span<const Tensor> row) {
  if (row.size() != width) {
    throw Error(ErrorKind::kDimension, "boundary MPS width " +
                                           std::to_string(width) +
                                           " vs row length " +
                                           std::to_string(row.size()));
  }
}

}  // namespace

BoundaryMps absorb_from_top(const BoundaryMps& top, std::span<const Tensor> row,
                            const Truncation& trunc) {
  check_row(top.sites.size(), row);
  BoundaryMps out;
  out.log_scale = top.log_scale;
  out.sites.reserve(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    const Tensor& t = top.sites[c];
    const Tensor& g = row[c];
    // (a,u,a') x (u,l,d,r) -> (a,a',l,d,r) -> (a,l,d,a',r)
    Tensor x = permute(contract(t, g, {{1, 0}}), {0, 2, 3, 1, 4});
    const std::size_t a = t.dim(0), a2 = t.dim(2);
    out.sites.push_back(std::move(x).reshaped(
        {a * g.dim(kLeft), g.dim(kDown), a2 * g.dim(kRight)}));
  }
  rescale_sites(out, trunc.rescale);
  compress(out, trunc);
  return out;
}

BoundaryMps absorb_from_bottom(const BoundaryMps& bottom,
                               std::span<const Tensor> row,
                               const Truncation& trunc) {
  check_row(bottom.sites.size(), row);
  BoundaryMps out;
  out.log_scale = bottom.log_scale;
  out.sites.reserve(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    const Tensor& b = bottom.sites[c];
    const Tensor& g = row[c];
    // (b,d,b') x (u,l,d,r) -> (b,b',u,l,r) -> (b,l,u,b',r)
    Tensor x = permute(contract(b, g, {{1, 2}}), {0, 3, 2, 1, 4});
    const std::size_t b0 = b.dim(0), b2 = b.dim(2);
    out.sites.push_back(std::move(x).reshaped(
        {b0 * g.dim(kLeft), g.dim(kUp), b2 * g.dim(kRight)}));
  }
  rescale_sites(out, trunc.rescale);
  compress(out, trunc);
  return out;
}

void compress(BoundaryMps& mps, const Truncation& trunc) {
  if (trunc.chi == 0 || mps.max_bond() <= trunc.chi) return;
  auto& sites = mps.sites;
  const std::size_t w = sites.size();

  // Left-canonical sweep so the right-to-left truncation is optimal.
  for (std::size_t c = 0; c + 1 < w; ++c) {
    auto [q, r] = qr_split(sites[c], 2);
    sites[c] = std::move(q);
    sites[c + 1] = contract(r, sites[c + 1], {{1, 0}});
    if (trunc.rescale) mps.log_scale += normalize_max(sites[c + 1]);
  }
  const SvdTruncation svd_settings{trunc.chi, trunc.rel_tol};
  for (std::size_t c = w; c-- > 1;) {
    SvdResult svd = svd_truncate(sites[c], {0}, svd_settings);
    Tensor us = std::move(svd.u);
    const std::size_t k = svd.s.size();
    for (std::size_t i = 0; i < us.dim(0); ++i) {
      for (std::size_t j = 0; j < k; ++j) us[i * k + j] *= svd.s[j];
    }
    sites[c] = std::move(svd.v);
    sites[c - 1] = contract(sites[c - 1], us, {{2, 0}});
    if (trunc.rescale) mps.log_scale += normalize_max(sites[c - 1]);
  }
}

SignedLog close(const BoundaryMps& top, const BoundaryMps& bottom) {
  if (top.sites.size() != bottom.sites.size()) {
    throw Error(ErrorKind::kDimension, "close: boundary widths differ");
  }
  Tensor e({1, 1}, 1.0);
  double log_scale = top.log_scale + bottom.log_scale;
  for (std::size_t c = 0; c < top.sites.size(); ++c) {
    Tensor x = contract(e, top.sites[c], {{0, 0}});          // (b,u,a')
    e = contract(x, bottom.sites[c], {{0, 0}, {1, 1}});      // (a',b')
    log_scale += normalize_max(e);
  }
  if (e.size() != 1) {
    throw Error(ErrorKind::kDimension, "close: open boundary bonds remain");
  }
  SignedLog out = SignedLog::from(e[0]);
  if (out.sign != 0) out.log_mag += log_scale;
  return out;
}

Partial unit_partial() { return {Tensor({1, 1, 1}, 1.0), 0.0}; }

Partial extend_left(const Partial& left, const Tensor& top, const Tensor& g,
                    const Tensor& bottom) {
  Tensor x = contract(left.tensor, top, {{0, 0}});       // (l,b,u,a')
  Tensor y = contract(x, g, {{2, kUp}, {0, kLeft}});     // (b,a',d,r)
  Partial out{contract(y, bottom, {{0, 0}, {2, 1}}),     // (a',r,b')
              left.log_scale};
  out.log_scale += normalize_max(out.tensor);
  return out;
}

Partial extend_right(const Partial& right, const Tensor& top, const Tensor& g,
                     const Tensor& bottom) {
  Tensor x = contract(right.tensor, top, {{0, 2}});      // (r,b',a,u)
  Tensor y = contract(x, g, {{3, kUp}, {0, kRight}});    // (b',a,l,d)
  Partial out{contract(y, bottom, {{0, 2}, {3, 1}}),     // (a,l,b)
              right.log_scale};
  out.log_scale += normalize_max(out.tensor);
  return out;
}

Partial site_environment(const Partial& left, const Tensor& top,
                         const Partial& right, const Tensor& bottom) {
  Tensor x = contract(left.tensor, top, {{0, 0}});       // (l,b,u,a')
  Tensor y = contract(x, right.tensor, {{3, 0}});        // (l,b,u,r,b')
  Tensor z = contract(y, bottom, {{1, 0}, {4, 2}});      // (l,u,r,d)
  Partial out{permute(z, {1, 0, 3, 2}), left.log_scale + right.log_scale};
  out.log_scale += normalize_max(out.tensor);
  return out;
}

std::vector<Partial> right_partials(const BoundaryMps& top,
                                    std::span<const Tensor> row,
                                    const BoundaryMps& bottom) {
  const std::size_t w = row.size();
  std::vector<Partial> out(w);
  out[w - 1] = unit_partial();
  for (std::size_t c = w - 1; c > 0; --c) {
    out[c - 1] = extend_right(out[c], top.sites[c], row[c], bottom.sites[c]);
  }
  return out;
}

Tensor physical_slice(const Tensor& site, std::size_t v) {
  const std::size_t d = site.dim(kPhys);
  Tensor out({site.dim(kUp), site.dim(kLeft), site.dim(kDown), site.dim(kRight)});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = site[i * d + v];
  return out;
}

std::vector<Tensor> fixed_layer(const Peps& p, const GridConfig& x) {
  std::vector<Tensor> out;
  out.reserve(p.num_sites());
  for (std::size_t r = 0; r < p.height(); ++r) {
    for (std::size_t c = 0; c < p.width(); ++c) {
      out.push_back(physical_slice(p.site(r, c), x(r, c)));
    }
  }
  return out;
}

Tensor fuse_pair(const Tensor& a, const Tensor& b) {
  Tensor outer = contract(a, b, std::span<const AxisPair>{});
  Tensor x = permute(outer, {0, 4, 1, 5, 2, 6, 3, 7});
  return std::move(x).reshaped({a.dim(0) * b.dim(0), a.dim(1) * b.dim(1),
                                a.dim(2) * b.dim(2), a.dim(3) * b.dim(3)});
}

Tensor traced_double(const Tensor& site) {
  Tensor x = permute(contract(site, site, {{kPhys, kPhys}}),
                     {0, 4, 1, 5, 2, 6, 3, 7});
  return std::move(x).reshaped(
      {site.dim(0) * site.dim(0), site.dim(1) * site.dim(1),
       site.dim(2) * site.dim(2), site.dim(3) * site.dim(3)});
}

}  // namespace pepsgen::detail
