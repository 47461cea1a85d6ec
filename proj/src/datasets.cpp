#include "pepsgen/datasets.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "pepsgen/error.hpp"
#include "pepsgen/rng.hpp"

namespace pepsgen {

namespace {

constexpr std::uint32_t kIdxImages = 2051;
constexpr std::uint32_t kIdxLabels = 2049;
constexpr std::array<char, 4> kCacheMagic = {'P', 'G', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;
constexpr std::size_t kMaxBarsSide = 16;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kInput, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Error format_error(const std::filesystem::path& path, std::size_t offset,
                   const std::string& what) {
  return Error(ErrorKind::kFormat, path.string() + ": byte offset " +
                                       std::to_string(offset) + ": " + what);
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off,
                   const std::filesystem::path& path) {
  if (off + 4 > b.size()) throw format_error(path, off, "truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

template <class T>
void put_le(std::ostream& os, T v) {
  char b[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>(u >> (8 * i));
  os.write(b, sizeof(T));
}

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint64_t le(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = std::span<const std::uint8_t>(bytes_).subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw format_error(path_, pos_, "truncated: need " + std::to_string(n) +
                                          " bytes, " +
                                          std::to_string(bytes_.size() - pos_) + " left");
    }
  }
  std::vector<std::uint8_t> bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

Dataset empty_like(const Dataset& d) {
  Dataset out;
  out.height = d.height;
  out.width = d.width;
  out.phys_dim = d.phys_dim;
  out.split = d.split;
  out.binarize_seed = d.binarize_seed;
  if (d.labels) out.labels.emplace();
  return out;
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (labels && labels->size() != configs.size()) {
    throw Error(ErrorKind::kInput, "dataset: " + std::to_string(labels->size()) +
                                       " labels for " + std::to_string(configs.size()) +
                                       " configs");
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& x = configs[i];
    if (x.height() != height || x.width() != width) {
      throw Error(ErrorKind::kInput, "dataset: config " + std::to_string(i) +
                                         " has the wrong shape");
    }
    for (auto v : x.values()) {
      if (v >= phys_dim) {
        throw Error(ErrorKind::kInput,
                    "dataset: config " + std::to_string(i) + " has a value >= d");
      }
    }
    if (labels && (*labels)[i] < 0) {
      throw Error(ErrorKind::kInput, "dataset: negative label at " + std::to_string(i));
    }
  }
}

Dataset gen_bars_stripes(std::size_t side) {
  if (side == 0) throw Error(ErrorKind::kInput, "bars and stripes: side must be >= 1");
  if (side > kMaxBarsSide) {
    throw Error(ErrorKind::kCapacity, "bars and stripes: side must be <= " +
                                          std::to_string(kMaxBarsSide));
  }
  Dataset d;
  d.height = d.width = side;
  const std::uint64_t n = std::uint64_t{1} << side;
  for (int columns = 0; columns < 2; ++columns) {
    for (std::uint64_t bits = 0; bits < n; ++bits) {
      const bool constant = bits == 0 || bits == n - 1;
      if (columns && constant) continue;
      GridConfig x(side, side);
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c)
          x(r, c) = static_cast<std::uint8_t>((bits >> (columns ? c : r)) & 1);
      d.configs.push_back(std::move(x));
    }
  }
  std::sort(d.configs.begin(), d.configs.end());
  d.configs.erase(std::unique(d.configs.begin(), d.configs.end()), d.configs.end());
  return d;
}

GreyImages load_mnist_idx(const std::filesystem::path& images,
                          const std::optional<std::filesystem::path>& labels) {
  const auto b = read_file(images);
  const std::uint32_t magic = be32(b, 0, images);
  if (magic != kIdxImages) {
    throw format_error(images, 0, "bad magic " + std::to_string(magic) + ", expected 2051");
  }
  const std::size_t n = be32(b, 4, images), h = be32(b, 8, images), w = be32(b, 12, images);
  const std::size_t payload = n * h * w;
  if (b.size() - 16 < payload) {
    throw format_error(images, b.size(), "truncated payload: expected " +
                                             std::to_string(payload) + " bytes after offset 16");
  }
  GreyImages g;
  g.height = h;
  g.width = w;
  g.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  if (labels) {
    const auto lb = read_file(*labels);
    const std::uint32_t lm = be32(lb, 0, *labels);
    if (lm != kIdxLabels) {
      throw format_error(*labels, 0, "bad magic " + std::to_string(lm) + ", expected 2049");
    }
    const std::size_t ln = be32(lb, 4, *labels);
    if (ln != n) {
      throw format_error(*labels, 4, "label count " + std::to_string(ln) +
                                         " does not match image count " + std::to_string(n));
    }
    if (lb.size() - 8 < ln) {
      throw format_error(*labels, lb.size(), "truncated payload: expected " +
                                                 std::to_string(ln) + " bytes after offset 8");
    }
    g.labels.emplace(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(ln));
  }
  return g;
}

void save_mnist_idx(const GreyImages& g, const std::filesystem::path& images,
                    const std::optional<std::filesystem::path>& labels) {
  std::ofstream os(images, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kInput, "cannot write " + images.string());
  put_be32(os, kIdxImages);
  put_be32(os, static_cast<std::uint32_t>(g.count()));
  put_be32(os, static_cast<std::uint32_t>(g.height));
  put_be32(os, static_cast<std::uint32_t>(g.width));
  os.write(reinterpret_cast<const char*>(g.pixels.data()),
           static_cast<std::streamsize>(g.pixels.size()));
  if (labels) {
    if (!g.labels) throw Error(ErrorKind::kInput, "no labels to write");
    std::ofstream ls(*labels, std::ios::binary | std::ios::trunc);
    if (!ls) throw Error(ErrorKind::kInput, "cannot write " + labels->string());
    put_be32(ls, kIdxLabels);
    put_be32(ls, static_cast<std::uint32_t>(g.labels->size()));
    ls.write(reinterpret_cast<const char*>(g.labels->data()),
             static_cast<std::streamsize>(g.labels->size()));
  }
}

GreyImages downsample(const GreyImages& g, std::size_t target) {
  if (g.height != 28 || g.width != 28 || target != 8) {
    throw Error(ErrorKind::kDimension,
                "downsample supports 28x28 -> 8x8, got " + std::to_string(g.height) + "x" +
                    std::to_string(g.width) + " -> " + std::to_string(target));
  }
  constexpr std::size_t kOffset = 2, kBlock = 3;
  GreyImages out;
  out.height = out.width = target;
  out.labels = g.labels;
  out.pixels.reserve(g.count() * target * target);
  for (std::size_t i = 0; i < g.count(); ++i) {
    const auto img = g.image(i);
    for (std::size_t br = 0; br < target; ++br) {
      for (std::size_t bc = 0; bc < target; ++bc) {
        unsigned sum = 0;
        for (std::size_t r = 0; r < kBlock; ++r)
          for (std::size_t c = 0; c < kBlock; ++c)
            sum += img[(kOffset + br * kBlock + r) * 28 + kOffset + bc * kBlock + c];
        out.pixels.push_back(static_cast<std::uint8_t>((sum + 4) / 9));
      }
    }
  }
  return out;
}

Dataset binarize(const GreyImages& g, std::uint64_t seed, std::size_t first_index) {
  Dataset d;
  d.height = g.height;
  d.width = g.width;
  d.binarize_seed = seed;
  const std::size_t n = g.count();
  d.configs.reserve(std::min<std::size_t>(n, std::size_t{1} << 20));
  for (std::size_t i = 0; i < n; ++i) {
    const auto img = g.image(i);
    GridConfig x(g.height, g.width);
    for (std::size_t j = 0; j < img.size(); ++j) {
      const double u = unit_from_bits(mix_seed(seed, first_index + i, j));
      x(j / g.width, j % g.width) = u * 255.0 < static_cast<double>(img[j]) ? 1 : 0;
    }
    d.configs.push_back(std::move(x));
  }
  if (g.labels) d.labels.emplace(g.labels->begin(), g.labels->end());
  return d;
}

Dataset slice(const Dataset& d, std::size_t begin, std::size_t end, Split split) {
  if (begin > end || end > d.size()) {
    throw Error(ErrorKind::kInput, "slice [" + std::to_string(begin) + ", " +
                                       std::to_string(end) + ") out of range for " +
                                       std::to_string(d.size()) + " examples");
  }
  Dataset out = empty_like(d);
  out.split = split;
  out.configs.assign(d.configs.begin() + static_cast<std::ptrdiff_t>(begin),
                     d.configs.begin() + static_cast<std::ptrdiff_t>(end));
  if (d.labels) {
    out.labels->assign(d.labels->begin() + static_cast<std::ptrdiff_t>(begin),
                       d.labels->begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> ModeSplit::counts() const {
  std::vector<std::size_t> out;
  for (const auto& m : modes) out.push_back(m.size());
  return out;
}

ModeSplit split_by_assignment(const Dataset& d, std::span<const std::int64_t> assignment) {
  if (assignment.size() != d.size()) {
    throw Error(ErrorKind::kInput, "mode assignment covers " +
                                       std::to_string(assignment.size()) + " of " +
                                       std::to_string(d.size()) + " examples");
  }
  std::map<std::int64_t, std::size_t> slot;
  for (auto a : assignment) slot.emplace(a, 0);
  ModeSplit out;
  for (auto& [id, k] : slot) {
    k = out.modes.size();
    out.mode_ids.push_back(id);
    out.modes.push_back(empty_like(d));
    out.index.emplace_back();
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t k = slot[assignment[i]];
    out.modes[k].configs.push_back(d.configs[i]);
    if (d.labels) out.modes[k].labels->push_back((*d.labels)[i]);
    out.index[k].push_back(i);
  }
  return out;
}

ModeSplit split_by_label(const Dataset& d) {
  if (!d.labels) throw Error(ErrorKind::kInput, "split by label: dataset has no labels");
  std::vector<std::int64_t> a(d.labels->begin(), d.labels->end());
  return split_by_assignment(d, a);
}

std::vector<std::int64_t> read_cluster_file(const std::filesystem::path& path,
                                            std::size_t n) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kInput, "cannot open cluster file " + path.string());
  std::vector<std::int64_t> out(n);
  std::vector<bool> seen(n, false);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kInput,
                path.string() + ": line " + std::to_string(lineno) + ": " + what);
  };
  auto parse = [&](std::string_view s, auto& v) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size() && !s.empty();
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (lineno == 1 && line.rfind("index,cluster", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected 'index,cluster'");
    std::uint64_t idx = 0;
    std::int64_t cluster = 0;
    if (!parse(std::string_view(line).substr(0, comma), idx)) fail("bad index");
    if (!parse(std::string_view(line).substr(comma + 1), cluster) || cluster < 0) {
      fail("bad cluster id");
    }
    if (idx >= n) {
      fail("index " + std::to_string(idx) + " out of range for " + std::to_string(n) +
           " examples");
    }
    if (seen[idx]) fail("index " + std::to_string(idx) + " assigned twice");
    seen[idx] = true;
    out[idx] = cluster;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      throw Error(ErrorKind::kInput,
                  path.string() + ": index " + std::to_string(i) + " has no cluster");
    }
  }
  return out;
}

ModeSplit split_by_cluster_file(const Dataset& d, const std::filesystem::path& path) {
  const auto a = read_cluster_file(path, d.size());
  return split_by_assignment(d, a);
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kInput, "cannot write " + path.string());
  os.write(kCacheMagic.data(), kCacheMagic.size());
  put_le<std::uint32_t>(os, kCacheVersion);
  put_le<std::uint64_t>(os, d.size());
  put_le<std::uint64_t>(os, d.height);
  put_le<std::uint64_t>(os, d.width);
  put_le<std::uint64_t>(os, d.phys_dim);
  put_le<std::uint64_t>(os, d.binarize_seed);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(d.split));
  put_le<std::uint8_t>(os, d.labels ? 1 : 0);
  const std::size_t sites = d.height * d.width;
  const bool bits = d.phys_dim == 2;
  std::vector<char> buf(bits ? (sites + 7) / 8 : sites);
  for (const auto& x : d.configs) {
    std::fill(buf.begin(), buf.end(), 0);
    for (std::size_t j = 0; j < sites; ++j) {
      if (bits) {
        buf[j / 8] = static_cast<char>(buf[j / 8] | (x.values()[j] << (j % 8)));
      } else {
        buf[j] = static_cast<char>(x.values()[j]);
      }
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (d.labels) {
    for (auto l : *d.labels) put_le<std::int32_t>(os, l);
  }
  if (!os) throw Error(ErrorKind::kInput, "write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  ByteReader in(read_file(path), path);
  for (char m : kCacheMagic) {
    if (static_cast<char>(in.le(1)) != m) throw format_error(path, 0, "bad magic");
  }
  const auto version = in.le(4);
  if (version != kCacheVersion) {
    throw format_error(path, 4, "unsupported version " + std::to_string(version));
  }
  Dataset d;
  const std::size_t n = in.le(8);
  d.height = in.le(8);
  d.width = in.le(8);
  d.phys_dim = in.le(8);
  d.binarize_seed = in.le(8);
  const auto split = in.le(1);
  if (split > 2) throw format_error(path, in.offset() - 1, "bad split tag");
  d.split = static_cast<Split>(split);
  const auto has_labels = in.le(1);
  if (d.height == 0 || d.width == 0 || d.height > 4096 || d.width > 4096 ||
      d.phys_dim < 2 || d.phys_dim > 256) {
    throw format_error(path, 12, "implausible dimensions");
  }
  const std::size_t sites = d.height * d.width;
  const bool bits = d.phys_dim == 2;
  const std::size_t rec = bits ? (sites + 7) / 8 : sites;
  d.configs.reserve(std::min<std::size_t>(n, std::size_t{1} << 20));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = in.offset();
    const auto b = in.take(rec);
    std::vector<std::uint8_t> v(sites);
    for (std::size_t j = 0; j < sites; ++j) {
      v[j] = bits ? static_cast<std::uint8_t>((b[j / 8] >> (j % 8)) & 1) : b[j];
      if (v[j] >= d.phys_dim) throw format_error(path, at + j, "value >= d");
    }
    d.configs.emplace_back(d.height, d.width, std::move(v));
  }
  if (has_labels) {
    d.labels.emplace();
    d.labels->reserve(d.configs.size());
    for (std::size_t i = 0; i < n; ++i) {
      d.labels->push_back(static_cast<std::int32_t>(static_cast<std::uint32_t>(in.le(4))));
    }
  }
  if (!in.done()) throw format_error(path, in.offset(), "trailing bytes");
  return d;
}

}  // namespace pepsgen
