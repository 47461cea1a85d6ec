#include "pepsgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pepsgen/error.hpp"
#include "pepsgen/rng.hpp"

namespace pepsgen {

using detail::BoundaryMps;
using detail::Partial;

namespace {

constexpr double kDegenerateFloor = 1e-300;

}  // namespace

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(~index)));
}

namespace {

// Layered partials carry the ket and bra top bonds separately:
// axes (top ket bond, top bra bond, row ket bond, row bra bond, bottom bond).

Tensor split_bottom(const Tensor& b, std::size_t bond_dim) {
  return b.reshaped({b.dim(0), bond_dim, bond_dim, b.dim(2)});
}

// Steps of a left extension up to (and excluding) the bottom contraction,
// for one ket/bra pair of site slices. Output (b, ak', d, r, ab', dd, rr).
Tensor left_ket_bra(const Tensor& x1, const Tensor& top, const Tensor& ket,
                    const Tensor& bra) {
  // x1 = L x top: (ab, l, ll, b, u, ak')
  Tensor x2 = contract(x1, ket, {{4, kUp}, {1, kLeft}});   // (ab, ll, b, ak', d, r)
  Tensor x3 = contract(x2, top, {{0, 0}});                 // (ll, b, ak', d, r, uu, ab')
  return contract(x3, bra, {{5, kUp}, {0, kLeft}});        // (b, ak', d, r, ab', dd, rr)
}

Partial finish_left(const Tensor& x4, const Tensor& bottom4, double log_scale) {
  Tensor z = contract(x4, bottom4, {{0, 0}, {2, 1}, {5, 2}});  // (ak', r, ab', rr, b')
  Partial out{permute(z, {0, 2, 1, 3, 4}), log_scale};
  out.log_scale += detail::normalize_max(out.tensor);
  return out;
}

Partial extend_right_traced(const Partial& right, const Tensor& top,
                            std::span<const Tensor> slices,
                            const Tensor& bottom4) {
  // right: (ak', ab', r, rr, b')
  Tensor y1 = contract(right.tensor, top, {{0, 2}});        // (ab', r, rr, b', ak, u)
  Tensor sum;
  for (std::size_t v = 0; v < slices.size(); ++v) {
    const Tensor& a = slices[v];
    Tensor y2 = contract(y1, a, {{5, kUp}, {1, kRight}});   // (ab', rr, b', ak, l, d)
    Tensor y3 = contract(y2, top, {{0, 2}});                // (rr, b', ak, l, d, ab, uu)
    Tensor y4 = contract(y3, a, {{6, kUp}, {0, kRight}});   // (b', ak, l, d, ab, ll, dd)
    if (v == 0) {
      sum = std::move(y4);
    } else {
      sum += y4;
    }
  }
  Tensor z = contract(sum, bottom4, {{0, 3}, {3, 1}, {6, 2}});  // (ak, l, ab, ll, b)
  Partial out{permute(z, {0, 2, 1, 3, 4}), right.log_scale};
  out.log_scale += detail::normalize_max(out.tensor);
  return out;
}

Partial unit_layered() { return {Tensor({1, 1, 1, 1, 1}, 1.0), 0.0}; }

}  // namespace

DirectSampler::DirectSampler(const Peps& p, const ContractionSettings& s)
    : peps_(&p), trunc_(detail::truncation_for(s, p.max_bond())) {
  const std::size_t h = p.height(), w = p.width(), d = p.phys_dim();
  std::vector<Tensor> traced;
  traced.reserve(p.num_sites());
  slices_.resize(p.num_sites());
  for (std::size_t j = 0; j < p.num_sites(); ++j) {
    traced.push_back(detail::traced_double(p.site(j)));
    for (std::size_t v = 0; v < d; ++v) {
      slices_[j].push_back(detail::physical_slice(p.site(j), v));
    }
  }
  bottoms_.resize(h + 1);
  bottoms_[h] = detail::trivial_boundary(w);
  for (std::size_t r = h; r-- > 1;) {
    bottoms_[r] = detail::absorb_from_bottom(
        bottoms_[r + 1], std::span<const Tensor>(traced).subspan(r * w, w),
        trunc_);
  }
}

// Walks the sites in raster order. `choose(r, c, probs)` receives the
// normalized conditional distribution and returns the chosen value. When
// `amp` is set, the amplitude of the walked configuration is written there.
template <class Chooser>
GridConfig DirectSampler::walk(Chooser&& choose, double& log_q,
                               SignedLog* amp) const {
  const Peps& p = *peps_;
  const std::size_t h = p.height(), w = p.width(), d = p.phys_dim();
  GridConfig x(h, w);
  std::vector<double> probs(d);
  std::vector<Partial> candidates(d);
  std::vector<Tensor> chosen_row(w);
  BoundaryMps top = detail::trivial_boundary(w);  // single layer, sampled rows
  log_q = 0.0;

  for (std::size_t r = 0; r < h; ++r) {
    const BoundaryMps& bottom = bottoms_[r + 1];
    std::vector<Tensor> bottom4(w);
    for (std::size_t c = 0; c < w; ++c) {
      bottom4[c] = split_bottom(bottom.sites[c], p.site(r, c).dim(kDown));
    }
    std::vector<Partial> rights(w);
    rights[w - 1] = unit_layered();
    for (std::size_t c = w - 1; c > 0; --c) {
      rights[c - 1] = extend_right_traced(rights[c], top.sites[c],
                                          slices_[r * w + c], bottom4[c]);
    }

    Partial left = unit_layered();
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t j = r * w + c;
      const Tensor x1 = contract(left.tensor, top.sites[c], {{0, 0}});
      double total = 0.0;
      for (std::size_t v = 0; v < d; ++v) {
        const Tensor& a = slices_[j][v];
        candidates[v] = finish_left(left_ket_bra(x1, top.sites[c], a, a),
                                    bottom4[c], left.log_scale);
        const double weight = inner(candidates[v].tensor, rights[c].tensor);
        // Relative scale between values: each candidate was normalized.
        probs[v] = weight;
      }
      // Bring the candidates back to a common scale before comparing.
      double max_ls = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < d; ++v) {
        if (probs[v] > 0.0) max_ls = std::max(max_ls, candidates[v].log_scale);
      }
      for (std::size_t v = 0; v < d; ++v) {
        probs[v] = probs[v] > 0.0
                       ? probs[v] * std::exp(candidates[v].log_scale - max_ls)
                       : 0.0;
        total += probs[v];
      }
      if (!(total > kDegenerateFloor) || !std::isfinite(total)) {
        throw DegenerateDistributionError(
            r, c, "all conditional probabilities vanish at site (" +
                      std::to_string(r) + "," + std::to_string(c) + ")");
      }
      for (double& q : probs) q /= total;
      const std::size_t v = choose(r, c, std::span<const double>(probs));
      if (probs[v] <= 0.0) {
        log_q = -std::numeric_limits<double>::infinity();
      } else {
        log_q += std::log(probs[v]);
      }
      x(r, c) = static_cast<std::uint8_t>(v);
      chosen_row[c] = slices_[j][v];
      left = std::move(candidates[v]);
    }
    top = detail::absorb_from_top(top, chosen_row, trunc_);
  }
  if (amp != nullptr) *amp = detail::close(top, detail::trivial_boundary(w));
  return x;
}

WeightedSample DirectSampler::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  WeightedSample out;
  SignedLog a;
  out.config = walk(
      [&](std::size_t, std::size_t, std::span<const double> probs) {
        const double u = uniform(rng);
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t v = 0; v < probs.size(); ++v) {
          if (probs[v] <= 0.0) continue;
          last = v;
          acc += probs[v];
          if (u < acc) return v;
        }
        return last;
      },
      out.log_q, &a);
  if (a.sign == 0) {
    out.log_psi2 = -std::numeric_limits<double>::infinity();
    out.log_weight = -std::numeric_limits<double>::infinity();
    out.weight = 0.0;
  } else {
    out.log_psi2 = 2.0 * a.log_mag;
    out.log_weight = out.log_psi2 - out.log_q;
    out.weight = std::exp(out.log_weight);
  }
  return out;
}

double DirectSampler::log_proposal(const GridConfig& x) const {
  if (x.height() != peps_->height() || x.width() != peps_->width()) {
    throw Error(ErrorKind::kDimension, "log_proposal: configuration shape");
  }
  double log_q = 0.0;
  walk([&](std::size_t r, std::size_t c, std::span<const double>) {
         return static_cast<std::size_t>(x(r, c));
       },
       log_q, nullptr);
  return log_q;
}

WeightedSample direct_sample(const Peps& p, const ContractionSettings& s,
                             std::mt19937_64& rng) {
  return DirectSampler(p, s).draw(rng);
}

std::vector<WeightedSample> sample_batch(const Peps& p, std::size_t n,
                                         const ContractionSettings& s,
                                         std::uint64_t seed) {
  std::vector<WeightedSample> out;
  if (n == 0) return out;
  const DirectSampler sampler(p, s);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = stream_rng(seed, i);
    out.push_back(sampler.draw(rng));
  }
  return out;
}

LogNormEstimate log_norm_from_samples(std::span<const WeightedSample> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorKind::kInput, "norm estimate needs at least 2 samples");
  }
  double max_lw = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) max_lw = std::max(max_lw, s.log_weight);
  if (!std::isfinite(max_lw)) {
    throw Error(ErrorKind::kNumeric, "all importance weights are zero");
  }
  const double n = static_cast<double>(samples.size());
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& s : samples) {
    const double w = std::exp(s.log_weight - max_lw);
    sum += w;
    sum_sq += w * w;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {max_lw + std::log(mean), std::sqrt(var / n) / mean};
}

LogNormEstimate estimate_log_norm(const Peps& p, std::size_t n_samples,
                                  const ContractionSettings& s,
                                  std::mt19937_64& rng) {
  if (n_samples < 2) {
    throw Error(ErrorKind::kInput, "estimate_log_norm: n_samples >= 2");
  }
  const DirectSampler sampler(p, s);
  std::vector<WeightedSample> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(sampler.draw(rng));
  return log_norm_from_samples(samples);
}

}  // namespace pepsgen
