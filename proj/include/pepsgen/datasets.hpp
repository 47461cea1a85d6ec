#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pepsgen/peps.hpp"

namespace pepsgen {

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

const char* to_string(Split s);

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t phys_dim = 2;
  std::vector<GridConfig> configs;
  std::optional<std::vector<std::int32_t>> labels;
  Split split = Split::kTrain;
  std::uint64_t binarize_seed = 0;

  std::size_t size() const noexcept { return configs.size(); }
  /// Throws kInput if a config or label breaks the dataset invariants.
  void validate() const;
};

/// Every L x L pattern whose rows are constant or whose columns are
/// constant, each once, in index order.
Dataset gen_bars_stripes(std::size_t side);

/// Greyscale images, row-major bytes, one image after another.
struct GreyImages {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t count() const noexcept {
    return height * width == 0 ? 0 : pixels.size() / (height * width);
  }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * height * width,
                                                         height * width);
  }
};

/// Reads IDX image (magic 2051) and optional label (magic 2049) files.
/// Errors are kFormat and name the byte offset involved.
GreyImages load_mnist_idx(const std::filesystem::path& images,
                          const std::optional<std::filesystem::path>& labels);

/// Writes IDX files in the same format.
void save_mnist_idx(const GreyImages& g, const std::filesystem::path& images,
                    const std::optional<std::filesystem::path>& labels);

/// 28x28 -> 8x8: central 24x24 crop averaged over 3x3 blocks, rounded to
/// nearest. Other sizes are a kDimension error.
GreyImages downsample(const GreyImages& g, std::size_t target = 8);

/// Pixel j of image i becomes 1 with probability v/255, decided by a hash
/// of (seed, first_index + i, j).
Dataset binarize(const GreyImages& g, std::uint64_t seed, std::size_t first_index = 0);

/// Examples [begin, end) as a new dataset tagged `split`.
Dataset slice(const Dataset& d, std::size_t begin, std::size_t end, Split split);

struct ModeSplit {
  std::vector<Dataset> modes;
  std::vector<std::int64_t> mode_ids;           // label or cluster id per mode
  std::vector<std::vector<std::size_t>> index;  // source indices per mode
  std::vector<std::size_t> counts() const;
};

/// One mode per distinct label, ascending.
ModeSplit split_by_label(const Dataset& d);

/// One mode per distinct cluster id, ascending. `assignment[i]` is the
/// cluster of example i.
ModeSplit split_by_assignment(const Dataset& d, std::span<const std::int64_t> assignment);

/// Parses `index,cluster` lines (an optional `index,cluster` header and
/// blank lines are skipped). Every index in [0, n) must appear exactly
/// once. Errors are kInput and name the line or the missing index.
std::vector<std::int64_t> read_cluster_file(const std::filesystem::path& path,
                                            std::size_t n);

ModeSplit split_by_cluster_file(const Dataset& d, const std::filesystem::path& path);

/// Binary cache: header (count, H, W, d, binarization seed, split, label
/// flag), then packed configs (one bit per site when d = 2, else one byte),
/// then int32 labels if present. Little-endian.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace pepsgen
