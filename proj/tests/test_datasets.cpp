#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pepsgen/datasets.hpp"
#include "pepsgen/error.hpp"

using namespace pepsgen;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path operator/(const std::string& f) const { return path_ / f; }

 private:
  std::filesystem::path path_;
};

ErrorKind kind_of(const std::function<void()>& f, std::string* what = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kNumeric;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> idx_header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> b;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return b;
}

GreyImages constant_images(std::size_t n, std::size_t side, std::uint8_t v) {
  GreyImages g;
  g.height = g.width = side;
  g.pixels.assign(n * side * side, v);
  return g;
}

}  // namespace

TEST(BarsStripes, Counts) {
  EXPECT_EQ(gen_bars_stripes(1).size(), 2u);
  EXPECT_EQ(gen_bars_stripes(2).size(), 6u);
  EXPECT_EQ(gen_bars_stripes(4).size(), 30u);
  EXPECT_EQ(gen_bars_stripes(10).size(), 2046u);
}

TEST(BarsStripes, UniqueAndRowOrColumnUniform) {
  for (std::size_t L = 1; L <= 5; ++L) {
    const Dataset d = gen_bars_stripes(L);
    std::set<GridConfig> seen(d.configs.begin(), d.configs.end());
    EXPECT_EQ(seen.size(), d.size());
    for (const auto& x : d.configs) EXPECT_TRUE(oracle::is_bar_or_stripe(x));
    if (L >= 2) EXPECT_EQ(d.size(), (std::size_t{2} << L) - 2);
  }
  EXPECT_THROW(gen_bars_stripes(0), Error);
  EXPECT_EQ(kind_of([] { gen_bars_stripes(17); }), ErrorKind::kCapacity);
}

TEST(Idx, RoundTripAndHeader) {
  TempDir dir("pepsgen_test_idx");
  GreyImages g = constant_images(3, 28, 0);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 7);
  g.labels = std::vector<std::uint8_t>{4, 0, 9};
  save_mnist_idx(g, dir / "img", dir / "lbl");
  std::ifstream is(dir / "img", std::ios::binary);
  std::vector<char> head(16);
  is.read(head.data(), 16);
  EXPECT_EQ(static_cast<unsigned char>(head[2]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(head[3]), 0x03);
  const GreyImages back = load_mnist_idx(dir / "img", dir / "lbl");
  EXPECT_EQ(back.count(), 3u);
  EXPECT_EQ(back.height, 28u);
  EXPECT_EQ(back.pixels, g.pixels);
  EXPECT_EQ(back.labels, g.labels);
}

TEST(Idx, FormatErrors) {
  TempDir dir("pepsgen_test_idx_err");
  auto img = idx_header(2051, {2, 2, 2});
  img.insert(img.end(), 8, 1);
  write_bytes(dir / "ok", img);

  auto bad = img;
  bad[3] = 0x04;
  write_bytes(dir / "magic", bad);
  std::string what;
  EXPECT_EQ(kind_of([&] { load_mnist_idx(dir / "magic", std::nullopt); }, &what),
            ErrorKind::kFormat);
  EXPECT_NE(what.find("offset 0"), std::string::npos) << what;

  auto shortp = img;
  shortp.resize(shortp.size() - 3);
  write_bytes(dir / "short", shortp);
  EXPECT_EQ(kind_of([&] { load_mnist_idx(dir / "short", std::nullopt); }, &what),
            ErrorKind::kFormat);
  EXPECT_NE(what.find("offset"), std::string::npos) << what;

  auto lbl = idx_header(2049, {3});
  lbl.insert(lbl.end(), 3, 0);
  write_bytes(dir / "lbl3", lbl);
  EXPECT_EQ(kind_of([&] { load_mnist_idx(dir / "ok", dir / "lbl3"); }), ErrorKind::kFormat);

  write_bytes(dir / "tiny", {0, 0, 8});
  EXPECT_EQ(kind_of([&] { load_mnist_idx(dir / "tiny", std::nullopt); }), ErrorKind::kFormat);
  EXPECT_EQ(load_mnist_idx(dir / "ok", std::nullopt).count(), 2u);
}

TEST(Binarize, BoundaryValuesAndDeterminism) {
  GreyImages g = constant_images(4, 3, 0);
  for (std::size_t i = 0; i < 9; ++i) g.pixels[9 + i] = 255;
  const Dataset a = binarize(g, 11);
  for (std::size_t j = 0; j < 9; ++j) {
    EXPECT_EQ(a.configs[0].values()[j], 0);
    EXPECT_EQ(a.configs[1].values()[j], 1);
  }
  EXPECT_EQ(a.binarize_seed, 11u);
  EXPECT_EQ(binarize(g, 11).configs, a.configs);
  EXPECT_EQ(a.size(), 4u);
  for (const auto& x : a.configs) {
    EXPECT_EQ(x.height(), 3u);
    for (auto v : x.values()) EXPECT_LE(v, 1);
  }
}

TEST(Binarize, FrequencyMatchesIntensity) {
  const std::size_t n = 100000;
  GreyImages g = constant_images(n, 1, 128);
  const Dataset d = binarize(g, 3);
  std::size_t ones = 0;
  for (const auto& x : d.configs) ones += x(0, 0);
  const double p = 128.0 / 255.0;
  EXPECT_NEAR(static_cast<double>(ones), n * p, 3 * std::sqrt(n * p * (1 - p)));
}

TEST(Binarize, OffsetIndexesContinueTheStream) {
  GreyImages g = constant_images(6, 4, 100);
  const Dataset all = binarize(g, 5);
  GreyImages tail = constant_images(2, 4, 100);
  const Dataset part = binarize(tail, 5, 4);
  EXPECT_EQ(part.configs[0], all.configs[4]);
  EXPECT_EQ(part.configs[1], all.configs[5]);
}

TEST(Downsample, Blocks) {
  const GreyImages c = downsample(constant_images(2, 28, 77));
  EXPECT_EQ(c.height, 8u);
  for (auto v : c.pixels) EXPECT_EQ(v, 77);
  for (auto v : downsample(constant_images(1, 28, 0)).pixels) EXPECT_EQ(v, 0);

  GreyImages one = constant_images(1, 28, 0);
  // Block (row 2, col 5) of the central crop starts at (2 + 6, 2 + 15).
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) one.pixels[(8 + r) * 28 + 17 + c] = 255;
  const GreyImages s = downsample(one);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(s.pixels[i], i == 2 * 8 + 5 ? 255 : 0) << i;

  EXPECT_EQ(kind_of([] { downsample(constant_images(1, 16, 0)); }), ErrorKind::kDimension);
}

TEST(Splits, ByLabel) {
  Dataset d = gen_bars_stripes(3);
  d.labels = std::vector<std::int32_t>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) (*d.labels)[i] = static_cast<std::int32_t>(i % 3);
  const ModeSplit s = split_by_label(d);
  ASSERT_EQ(s.modes.size(), 3u);
  EXPECT_EQ(s.mode_ids, (std::vector<std::int64_t>{0, 1, 2}));
  std::multiset<GridConfig> joined;
  std::size_t total = 0;
  for (std::size_t m = 0; m < 3; ++m) {
    total += s.counts()[m];
    for (std::size_t k = 0; k < s.modes[m].size(); ++k) {
      joined.insert(s.modes[m].configs[k]);
      EXPECT_EQ(s.modes[m].configs[k], d.configs[s.index[m][k]]);
    }
  }
  EXPECT_EQ(total, d.size());
  EXPECT_EQ(joined, std::multiset<GridConfig>(d.configs.begin(), d.configs.end()));

  Dataset unlabeled = gen_bars_stripes(2);
  EXPECT_EQ(kind_of([&] { split_by_label(unlabeled); }), ErrorKind::kInput);
}

TEST(Splits, ClusterFile) {
  TempDir dir("pepsgen_test_cluster");
  const Dataset d = gen_bars_stripes(2);
  {
    std::ofstream os(dir / "all0.csv");
    os << "index,cluster\n";
    for (std::size_t i = 0; i < d.size(); ++i) os << i << ",0\n";
  }
  const ModeSplit one = split_by_cluster_file(d, dir / "all0.csv");
  ASSERT_EQ(one.modes.size(), 1u);
  EXPECT_EQ(one.modes[0].configs, d.configs);

  {
    std::ofstream os(dir / "missing.csv");
    for (std::size_t i = 0; i < d.size(); ++i)
      if (i != 3) os << i << "," << i % 2 << "\n";
  }
  std::string what;
  EXPECT_EQ(kind_of([&] { split_by_cluster_file(d, dir / "missing.csv"); }, &what),
            ErrorKind::kInput);
  EXPECT_NE(what.find("index 3"), std::string::npos) << what;

  std::ofstream(dir / "garbage.csv") << "0,1\n1;2\n";
  EXPECT_EQ(kind_of([&] { read_cluster_file(dir / "garbage.csv", 2); }, &what), ErrorKind::kInput);
  EXPECT_NE(what.find("line 2"), std::string::npos) << what;

  std::ofstream(dir / "twice.csv") << "0,1\n0,2\n";
  EXPECT_EQ(kind_of([&] { read_cluster_file(dir / "twice.csv", 2); }), ErrorKind::kInput);
  EXPECT_EQ(kind_of([&] { read_cluster_file(dir / "nope.csv", 2); }), ErrorKind::kInput);
}

TEST(Slice, Ranges) {
  const Dataset d = gen_bars_stripes(3);
  const Dataset s = slice(d, 2, 5, Split::kValidation);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.configs[0], d.configs[2]);
  EXPECT_EQ(s.split, Split::kValidation);
  EXPECT_THROW(slice(d, 5, 2, Split::kTest), Error);
  EXPECT_THROW(slice(d, 0, d.size() + 1, Split::kTest), Error);
}

TEST(Cache, RoundTripAndCorruption) {
  TempDir dir("pepsgen_test_cache");
  Dataset d = binarize(downsample(constant_images(5, 28, 90)), 42);
  d.labels = std::vector<std::int32_t>{1, 2, 3, 4, 5};
  d.split = Split::kTest;
  save_dataset(d, dir / "d.pgds");
  const Dataset back = load_dataset(dir / "d.pgds");
  EXPECT_EQ(back.configs, d.configs);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.binarize_seed, 42u);
  EXPECT_EQ(back.split, Split::kTest);
  EXPECT_EQ(back.height, 8u);

  Dataset bs = gen_bars_stripes(4);
  save_dataset(bs, dir / "bs.pgds");
  EXPECT_EQ(load_dataset(dir / "bs.pgds").configs, bs.configs);
  EXPECT_FALSE(load_dataset(dir / "bs.pgds").labels.has_value());

  std::ifstream is(dir / "d.pgds", std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), {});
  auto cut = bytes;
  cut.resize(cut.size() - 2);
  write_bytes(dir / "cut.pgds", cut);
  EXPECT_EQ(kind_of([&] { load_dataset(dir / "cut.pgds"); }), ErrorKind::kFormat);
  auto magic = bytes;
  magic[0] = 'Q';
  write_bytes(dir / "magic.pgds", magic);
  EXPECT_EQ(kind_of([&] { load_dataset(dir / "magic.pgds"); }), ErrorKind::kFormat);
}

TEST(DatasetValidate, Invariants) {
  Dataset d = gen_bars_stripes(2);
  d.labels = std::vector<std::int32_t>{0, 1};
  EXPECT_THROW(d.validate(), Error);
  d.labels.reset();
  d.configs.push_back(GridConfig(3, 3));
  EXPECT_THROW(d.validate(), Error);
}
