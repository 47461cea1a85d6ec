#pragma once

// Row-by-row contraction machinery shared by the single-layer (amplitude,
// environments) and double-layer (norm, sampling) networks. A grid network
// is a row of rank-4 tensors (up, left, down, right) per grid row.

#include <cstddef>
#include <span>
#include <vector>

#include "pepsgen/peps.hpp"
#include "pepsgen/tensor.hpp"

namespace pepsgen::detail {

/// Boundary MPS; each site tensor has axes (left, phys, right). The
/// represented object is the product of the site tensors times
/// exp(log_scale).
struct BoundaryMps {
  std::vector<Tensor> sites;
  double log_scale = 0.0;

  std::size_t max_bond() const;
};

struct Truncation {
  std::size_t chi = 0;  // 0: no truncation
  double rel_tol = 0.0;
  bool rescale = true;  // keep site tensors at unit max-abs entry
};

Truncation truncation_for(const ContractionSettings& s, std::size_t bond_dim);

/// Open MPS of all-ones (1,1,1) tensors.
BoundaryMps trivial_boundary(std::size_t width);

/// Rescales `t` to unit max-abs entry and returns log of the factor removed
/// (0 for an all-zero tensor).
double normalize_max(Tensor& t);

/// Absorbs a row from above: the MPS phys legs meet the row's up legs and
/// the new phys legs are the row's down legs.
BoundaryMps absorb_from_top(const BoundaryMps& top, std::span<const Tensor> row,
                            const Truncation& trunc);

/// Absorbs a row from below: MPS phys legs meet the row's down legs.
BoundaryMps absorb_from_bottom(const BoundaryMps& bottom,
                               std::span<const Tensor> row,
                               const Truncation& trunc);

/// Truncates all bonds to chi (no-op when chi == 0 or no bond exceeds chi).
void compress(BoundaryMps& mps, const Truncation& trunc);

/// Full contraction of a top and a bottom boundary over matching phys legs.
SignedLog close(const BoundaryMps& top, const BoundaryMps& bottom);

/// Row partial contractions between a top and bottom boundary. A left
/// partial has axes (top bond, row horizontal bond, bottom bond).
struct Partial {
  Tensor tensor;
  double log_scale = 0.0;
};

Partial unit_partial();

/// Extends a left partial across column c with the site tensor g.
Partial extend_left(const Partial& left, const Tensor& top, const Tensor& g,
                    const Tensor& bottom);
/// Extends a right partial across column c with the site tensor g.
Partial extend_right(const Partial& right, const Tensor& top, const Tensor& g,
                     const Tensor& bottom);

/// Environment of the site between partials: axes (up, left, down, right).
Partial site_environment(const Partial& left, const Tensor& top,
                         const Partial& right, const Tensor& bottom);

/// Right partials for every column: result[c] covers columns > c, so
/// result[W-1] is the unit partial.
std::vector<Partial> right_partials(const BoundaryMps& top,
                                    std::span<const Tensor> row,
                                    const BoundaryMps& bottom);

/// Single-layer site tensors with physical legs fixed to x.
std::vector<Tensor> fixed_layer(const Peps& p, const GridConfig& x);

/// Slice of a site tensor at physical index v: axes (up, left, down, right).
Tensor physical_slice(const Tensor& site, std::size_t v);

/// Bra-ket product a (x) b with each leg pair fused (a index major).
Tensor fuse_pair(const Tensor& a, const Tensor& b);

/// Double-layer site tensor sum_p A_p (x) A_p.
Tensor traced_double(const Tensor& site);

}  // namespace pepsgen::detail
