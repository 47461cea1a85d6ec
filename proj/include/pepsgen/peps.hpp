#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "pepsgen/tensor.hpp"

namespace pepsgen {

/// Axis order of every PEPS site tensor.
enum SiteAxis : std::size_t { kUp = 0, kLeft = 1, kDown = 2, kRight = 3, kPhys = 4 };

/// H x W assignment of physical basis indices, raster order.
class GridConfig {
 public:
  GridConfig() = default;
  GridConfig(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : height_(height), width_(width), values_(height * width, fill) {}
  GridConfig(std::size_t height, std::size_t width,
             std::vector<std::uint8_t> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::uint8_t operator()(std::size_t r, std::size_t c) const {
    return values_[r * width_ + c];
  }
  std::uint8_t& operator()(std::size_t r, std::size_t c) {
    return values_[r * width_ + c];
  }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  /// Mixed-radix index of the configuration, raster order, first site most
  /// significant.
  std::uint64_t index(std::size_t phys_dim) const;
  static GridConfig from_index(std::uint64_t index, std::size_t height,
                               std::size_t width, std::size_t phys_dim);

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
  friend auto operator<=>(const GridConfig&, const GridConfig&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

struct ContractionSettings {
  static constexpr std::size_t kExact = 0;

  /// Boundary-MPS bond cap. nullopt selects 2*D^2 for the network being
  /// contracted; kExact disables truncation.
  std::optional<std::size_t> chi;
  double rel_tol = 1e-12;
  bool log_scale = true;

  static ContractionSettings exact() { return {kExact, 0.0, true}; }
  static ContractionSettings with_chi(std::size_t chi) { return {chi, 1e-12, true}; }
};

/// A real number stored as sign and log-magnitude. sign == 0 means zero.
struct SignedLog {
  int sign = 0;
  double log_mag = -std::numeric_limits<double>::infinity();

  double value() const;
  static SignedLog from(double v);
};

class Peps {
 public:
  Peps() = default;
  /// Tensors in raster order, each with axes (up, left, down, right, phys).
  Peps(std::size_t height, std::size_t width, std::size_t phys_dim,
       std::vector<Tensor> tensors);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t phys_dim() const noexcept { return phys_dim_; }
  std::size_t num_sites() const noexcept { return tensors_.size(); }

  const Tensor& site(std::size_t r, std::size_t c) const {
    return tensors_[r * width_ + c];
  }
  const Tensor& site(std::size_t j) const { return tensors_[j]; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

  /// Replaces a site tensor; the shape must not change.
  void set_site(std::size_t j, Tensor t);
  /// Entry access for parameter updates. Shapes are fixed.
  std::span<double> site_data(std::size_t j) { return tensors_[j].data(); }
  void scale_site(std::size_t j, double alpha) { tensors_[j] *= alpha; }

  /// Bond between (r-1, c) and (r, c); r = 0 and r = H are boundary bonds.
  std::size_t vertical_bond(std::size_t r, std::size_t c) const;
  /// Bond between (r, c-1) and (r, c); c = 0 and c = W are boundary bonds.
  std::size_t horizontal_bond(std::size_t r, std::size_t c) const;
  std::size_t max_bond() const noexcept;
  std::size_t num_parameters() const noexcept;

  friend bool operator==(const Peps&, const Peps&) = default;

 private:
  void validate() const;

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t phys_dim_ = 0;
  std::vector<Tensor> tensors_;
};

struct IsingParams {
  double beta = 0.0;
  std::size_t height = 1;
  std::size_t width = 1;
};

/// Resolved bond cap for a network whose virtual legs have dimension
/// `virtual_dim`: 0 means no truncation.
std::size_t resolve_chi(const ContractionSettings& s, std::size_t virtual_dim);

/// Psi(x) by top-to-bottom boundary-MPS contraction of the single layer.
SignedLog amplitude(const Peps& p, const GridConfig& x,
                    const ContractionSettings& s);

/// Tensor whose |Psi(x)|^2 is the Ising Boltzmann weight exp(beta sum s_i s_j).
Peps ising_peps(const IsingParams& params);

/// D = 2 PEPS supported exactly on the L x L bars-and-stripes patterns.
Peps bars_stripes_peps(std::size_t side);

/// Entries i.i.d. uniform on [0, 1).
Peps random_peps(std::size_t height, std::size_t width, std::size_t phys_dim,
                 std::size_t bond_dim, std::uint64_t seed);

/// Largest d^(H W) accepted by enumeration routines.
inline constexpr std::uint64_t kMaxEnumeration = std::uint64_t{1} << 20;

/// log sum_x |Psi(x)|^2 by exhaustive enumeration with exact amplitudes.
double log_norm_exact(const Peps& p);

/// log sum_x |Psi(x)|^2 by boundary-MPS contraction of the bra-ket network.
double double_layer_log_norm(const Peps& p, const ContractionSettings& s);

/// dPsi(x)/dA_j for one site, stored as `tensor * exp(log_scale)`.
struct SiteEnvironment {
  Tensor tensor;  // (up, left, down, right, phys), zero off the x_j slot
  double log_scale = 0.0;

  Tensor value() const;
};

/// Environments of every site in raster order.
std::vector<SiteEnvironment> environments(const Peps& p, const GridConfig& x,
                                          const ContractionSettings& s);

/// dlog|Psi(x)|/dA_j = E_j / Psi(x) per site, with Psi(x) taken as the
/// contraction of E_j with A_j. Throws InfiniteNllError(0) if Psi(x) == 0.
std::vector<Tensor> log_derivatives(const Peps& p, const GridConfig& x,
                                    const ContractionSettings& s);

/// Every configuration of an H x W grid with d values, index order.
std::vector<GridConfig> enumerate_configs(std::size_t height, std::size_t width,
                                          std::size_t phys_dim);

void save_peps(const Peps& p, const std::filesystem::path& path);
Peps load_peps(const std::filesystem::path& path);

}  // namespace pepsgen
