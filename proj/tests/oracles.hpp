#pragma once

// Brute-force references used by the unit and acceptance tests. Nothing here
// shares code with the library's contraction routines.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "pepsgen/peps.hpp"
#include "pepsgen/tensor.hpp"

namespace oracle {

using pepsgen::GridConfig;
using pepsgen::Peps;
using pepsgen::Tensor;

// Sum over paired axes by explicit index loops.
inline Tensor loop_contract(const Tensor& a, const Tensor& b,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<int> role_a(a.rank(), -1), role_b(b.rank(), -1);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    role_a[pairs[p].first] = static_cast<int>(p);
    role_b[pairs[p].second] = static_cast<int>(p);
  }
  pepsgen::Shape out_shape, sum_shape;
  std::vector<std::size_t> free_a, free_b;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (role_a[i] < 0) {
      free_a.push_back(i);
      out_shape.push_back(a.dim(i));
    }
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (role_b[i] < 0) {
      free_b.push_back(i);
      out_shape.push_back(b.dim(i));
    }
  for (const auto& p : pairs) sum_shape.push_back(a.dim(p.first));
  Tensor out(out_shape);
  const std::size_t n_out = pepsgen::shape_size(out_shape);
  const std::size_t n_sum = pepsgen::shape_size(sum_shape);
  std::vector<std::size_t> oi(out_shape.size()), si(sum_shape.size());
  std::vector<std::size_t> ia(a.rank()), ib(b.rank());
  for (std::size_t o = 0; o < n_out; ++o) {
    std::size_t rem = o;
    for (std::size_t k = out_shape.size(); k-- > 0;) {
      oi[k] = rem % out_shape[k];
      rem /= out_shape[k];
    }
    double acc = 0.0;
    for (std::size_t s = 0; s < n_sum; ++s) {
      std::size_t r2 = s;
      for (std::size_t k = sum_shape.size(); k-- > 0;) {
        si[k] = r2 % sum_shape[k];
        r2 /= sum_shape[k];
      }
      for (std::size_t k = 0; k < free_a.size(); ++k) ia[free_a[k]] = oi[k];
      for (std::size_t k = 0; k < free_b.size(); ++k) ib[free_b[k]] = oi[free_a.size() + k];
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        ia[pairs[p].first] = si[p];
        ib[pairs[p].second] = si[p];
      }
      acc += a.at(ia) * b.at(ib);
    }
    out[o] = acc;
  }
  return out;
}

// Psi(x) by summing over every assignment of every virtual bond.
inline double brute_amplitude(const Peps& p, const GridConfig& x) {
  const std::size_t h = p.height(), w = p.width();
  // Bond variables: vertical (r, c) for r in 0..h, horizontal (r, c) for c in 0..w.
  std::vector<std::size_t> dims;
  auto vid = [&](std::size_t r, std::size_t c) { return r * w + c; };
  auto hid = [&](std::size_t r, std::size_t c) { return (h + 1) * w + r * (w + 1) + c; };
  for (std::size_t r = 0; r <= h; ++r)
    for (std::size_t c = 0; c < w; ++c) dims.push_back(p.vertical_bond(r, c));
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c <= w; ++c) dims.push_back(p.horizontal_bond(r, c));
  std::vector<std::size_t> idx(dims.size(), 0);
  double total = 0.0;
  while (true) {
    double prod = 1.0;
    for (std::size_t r = 0; r < h && prod != 0.0; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        prod *= p.site(r, c).at({idx[vid(r, c)], idx[hid(r, c)], idx[vid(r + 1, c)],
                                 idx[hid(r, c + 1)], x(r, c)});
      }
    }
    total += prod;
    std::size_t k = 0;
    for (; k < idx.size(); ++k) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
    if (k == idx.size()) break;
  }
  return total;
}

// Ising energy with couplings J = -1 on nearest-neighbour bonds, spins
// s = 2x - 1: E(x) = -sum s_i s_j, so exp(-beta E) = exp(beta sum s_i s_j).
inline double ising_energy(const GridConfig& x) {
  double e = 0.0;
  auto spin = [&](std::size_t r, std::size_t c) { return x(r, c) ? 1.0 : -1.0; };
  for (std::size_t r = 0; r < x.height(); ++r) {
    for (std::size_t c = 0; c < x.width(); ++c) {
      if (r + 1 < x.height()) e -= spin(r, c) * spin(r + 1, c);
      if (c + 1 < x.width()) e -= spin(r, c) * spin(r, c + 1);
    }
  }
  return e;
}

inline std::vector<GridConfig> all_configs(std::size_t h, std::size_t w, std::size_t d) {
  std::vector<GridConfig> out;
  std::size_t n = 1;
  for (std::size_t i = 0; i < h * w; ++i) n *= d;
  for (std::size_t i = 0; i < n; ++i) {
    GridConfig x(h, w);
    std::size_t rem = i;
    for (std::size_t j = h * w; j-- > 0;) {
      x(j / w, j % w) = static_cast<std::uint8_t>(rem % d);
      rem /= d;
    }
    out.push_back(x);
  }
  return out;
}

// Born probabilities from brute-force amplitudes.
inline std::vector<double> born_distribution(const Peps& p) {
  const auto xs = all_configs(p.height(), p.width(), p.phys_dim());
  std::vector<double> probs;
  double z = 0.0;
  for (const auto& x : xs) {
    const double a = brute_amplitude(p, x);
    probs.push_back(a * a);
    z += a * a;
  }
  for (double& q : probs) q /= z;
  return probs;
}

inline bool is_bar_or_stripe(const GridConfig& x) {
  bool rows = true, cols = true;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c) {
      rows = rows && x(r, c) == x(r, 0);
      cols = cols && x(r, c) == x(0, c);
    }
  return rows || cols;
}

inline Tensor random_tensor(const pepsgen::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace oracle
