#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mcsd/data.hpp"
#include "mcsd/metrics.hpp"
#include "mcsd/png_io.hpp"
#include "mcsd/synth.hpp"

using mcsd::DatasetManifest;
using mcsd::ImageU8;
using mcsd::SyntheticConfig;
using mcsd::Tensor;

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& name) {
  fs::path p = fs::path(testing::TempDir()) / name;
  fs::create_directories(p);
  return p.string();
}

void make_png(const std::string& path, int64_t h, int64_t w, uint8_t value) {
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 1;
  img.pixels.assign(static_cast<size_t>(h * w), value);
  mcsd::write_png_gray(path, img);
}

// One shared image/mask pair referenced by every row; rows differ only in
// their timestamps.
std::string make_manifest(const std::string& name, const std::vector<std::string>& timestamps) {
  const std::string dir = temp_dir(name);
  make_png(dir + "/img.png", 4, 4, 100);
  make_png(dir + "/msk.png", 4, 4, 255);
  std::ofstream out(dir + "/manifest.csv");
  out << "timestamp,image,mask\n";
  for (const std::string& t : timestamps) out << t << ",img.png,msk.png\n";
  out.close();
  return dir + "/manifest.csv";
}

std::vector<std::string> minute_rows(const std::vector<int64_t>& minutes) {
  std::vector<std::string> rows;
  for (int64_t m : minutes) rows.push_back(std::to_string(m));
  return rows;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Reference enumeration: a window starts at every frame whose next width-1
// exact-interval successors all exist.
std::vector<std::vector<int64_t>> brute_force_windows(const DatasetManifest& m, int64_t width, int64_t interval) {
  std::vector<std::vector<int64_t>> out;
  for (size_t s = 0; s < m.records.size(); ++s) {
    std::vector<int64_t> w = {static_cast<int64_t>(s)};
    for (int64_t k = 1; k < width; ++k) {
      const int64_t want = m.records[s].minutes + k * interval;
      bool found = false;
      for (size_t j = 0; j < m.records.size(); ++j) {
        if (m.records[j].minutes == want) {
          w.push_back(static_cast<int64_t>(j));
          found = true;
          break;
        }
      }
      if (!found) break;
    }
    if (static_cast<int64_t>(w.size()) == width) out.push_back(w);
  }
  return out;
}

TEST(PngIo, RoundTripsGrayPixels) {
  const std::string dir = temp_dir("png_round");
  ImageU8 img;
  img.height = 6;
  img.width = 8;
  img.channels = 1;
  img.pixels.resize(48);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<uint8_t>(i * 5);
  mcsd::write_png_gray(dir + "/a.png", img);
  ImageU8 back = mcsd::read_png_gray(dir + "/a.png");
  EXPECT_EQ(back.height, 6);
  EXPECT_EQ(back.width, 8);
  EXPECT_EQ(back.channels, 1);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(PngIo, ReadsRgbAsGray) {
  const std::string dir = temp_dir("png_rgb");
  ImageU8 img;
  img.height = 3;
  img.width = 3;
  img.channels = 3;
  img.pixels.assign(27, 77);
  mcsd::write_png_rgb(dir + "/rgb.png", img);
  ImageU8 back = mcsd::read_png_gray(dir + "/rgb.png");
  EXPECT_EQ(back.channels, 1);
  for (uint8_t v : back.pixels) EXPECT_EQ(v, 77);
}

TEST(PngIo, RejectsMissingAndGarbageFiles) {
  const std::string dir = temp_dir("png_bad");
  EXPECT_THROW(mcsd::read_png_gray(dir + "/nope.png"), mcsd::DataError);
  std::ofstream(dir + "/junk.png") << "this is not a png";
  EXPECT_THROW(mcsd::read_png_gray(dir + "/junk.png"), mcsd::DataError);
}

TEST(CivilDates, EpochAnchorsAndRoundTrip) {
  EXPECT_EQ(mcsd::detail::days_from_civil(1970, 1, 1), 0);
  EXPECT_EQ(mcsd::detail::days_from_civil(1970, 1, 2), 1);
  EXPECT_EQ(mcsd::detail::days_from_civil(2000, 3, 1), mcsd::detail::days_from_civil(2000, 2, 29) + 1);
  for (int64_t day = -1000; day <= 40000; day += 73) {
    int64_t y = 0, m = 0, d = 0;
    mcsd::detail::civil_from_days(day, y, m, d);
    EXPECT_EQ(mcsd::detail::days_from_civil(y, m, d), day);
  }
}

TEST(Manifest, SortsRowsByTimestamp) {
  const std::string path = make_manifest("man_sort", {"90", "30", "60"});
  DatasetManifest m = mcsd::load_manifest(path);
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].minutes, 30);
  EXPECT_EQ(m.records[1].minutes, 60);
  EXPECT_EQ(m.records[2].minutes, 90);
  EXPECT_EQ(m.cadence_minutes, 30);
  EXPECT_TRUE(fs::exists(m.records[0].image));
}

TEST(Manifest, ParsesIsoAndIntegerTimestampsConsistently) {
  const int64_t day = mcsd::detail::days_from_civil(2024, 3, 1);
  const std::string path =
      make_manifest("man_iso", {"2024-03-01T00:00Z", std::to_string(day * 1440 + 30), "2024-03-01T01:00:00"});
  DatasetManifest m = mcsd::load_manifest(path);
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].minutes, day * 1440);
  EXPECT_EQ(m.records[1].minutes, day * 1440 + 30);
  EXPECT_EQ(m.records[2].minutes, day * 1440 + 60);
  EXPECT_EQ(m.cadence_minutes, 30);
}

TEST(Manifest, RejectsDuplicateTimestampsNamingBothRows) {
  const std::string path = make_manifest("man_dup", {"30", "60", "30"});
  try {
    mcsd::load_manifest(path);
    FAIL() << "expected DataError";
  } catch (const mcsd::DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4"), std::string::npos) << msg;
  }
}

TEST(Manifest, RejectsMissingFilesWithRowNumber) {
  const std::string dir = temp_dir("man_missing");
  make_png(dir + "/img.png", 4, 4, 1);
  std::ofstream(dir + "/manifest.csv") << "timestamp,image,mask\n15,img.png,absent.png\n";
  try {
    mcsd::load_manifest(dir + "/manifest.csv");
    FAIL() << "expected DataError";
  } catch (const mcsd::DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("absent.png"), std::string::npos) << msg;
  }
}

TEST(Manifest, RejectsMalformedInput) {
  const std::string dir = temp_dir("man_bad");
  make_png(dir + "/img.png", 4, 4, 1);
  std::ofstream(dir + "/h.csv") << "time,image,mask\n";
  EXPECT_THROW(mcsd::load_manifest(dir + "/h.csv"), mcsd::DataError);
  std::ofstream(dir + "/empty.csv") << "";
  EXPECT_THROW(mcsd::load_manifest(dir + "/empty.csv"), mcsd::DataError);
  std::ofstream(dir + "/headeronly.csv") << "timestamp,image,mask\n";
  EXPECT_THROW(mcsd::load_manifest(dir + "/headeronly.csv"), mcsd::DataError);
  std::ofstream(dir + "/fields.csv") << "timestamp,image,mask\n15,img.png\n";
  EXPECT_THROW(mcsd::load_manifest(dir + "/fields.csv"), mcsd::DataError);
  std::ofstream(dir + "/secs.csv") << "timestamp,image,mask\n2024-01-01T00:00:30,img.png,img.png\n";
  EXPECT_THROW(mcsd::load_manifest(dir + "/secs.csv"), mcsd::DataError);
  EXPECT_THROW(mcsd::load_manifest(dir + "/nonexistent.csv"), mcsd::DataError);
}

TEST(Sequences, TwelveContiguousFramesGiveExactlyTwoWindows) {
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 12; ++i) minutes.push_back(i * 15);
  const std::string path = make_manifest("seq_twelve", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  EXPECT_EQ(m.cadence_minutes, 15);
  auto seqs = mcsd::build_sequences(m, 6, 30);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0], (std::vector<int64_t>{0, 2, 4, 6, 8, 10}));
  EXPECT_EQ(seqs[1], (std::vector<int64_t>{1, 3, 5, 7, 9, 11}));
}

TEST(Sequences, GapDiscardsStraddlingWindows) {
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 12; ++i)
    if (i != 5) minutes.push_back(i * 15);
  const std::string path = make_manifest("seq_gap", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  auto seqs = mcsd::build_sequences(m, 6, 30);
  auto expect = brute_force_windows(m, 6, 30);
  EXPECT_EQ(seqs, expect);
  for (const auto& w : seqs)
    for (size_t k = 1; k < w.size(); ++k)
      EXPECT_EQ(m.records[w[k]].minutes - m.records[w[k - 1]].minutes, 30);
}

TEST(Sequences, ShortManifestYieldsNoWindows) {
  const std::string path = make_manifest("seq_short", minute_rows({0, 15, 30, 45, 60}));
  DatasetManifest m = mcsd::load_manifest(path);
  EXPECT_TRUE(mcsd::build_sequences(m, 6, 15).empty());
}

TEST(Sequences, MatchesBruteForceOnRandomGaps) {
  mcsd::Rng rng(41);
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 40; ++i)
    if (rng.uniform() < 0.8) minutes.push_back(i * 15);
  const std::string path = make_manifest("seq_random", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path, 15);
  for (int64_t interval : {15, 30, 60}) {
    auto seqs = mcsd::build_sequences(m, 4, interval);
    EXPECT_EQ(seqs, brute_force_windows(m, 4, interval)) << "interval " << interval;
  }
}

TEST(Sequences, RejectsBadParameters) {
  const std::string path = make_manifest("seq_bad", minute_rows({0, 15}));
  DatasetManifest m = mcsd::load_manifest(path);
  EXPECT_THROW(mcsd::build_sequences(m, 0, 30), mcsd::ConfigError);
  EXPECT_THROW(mcsd::build_sequences(m, 6, 0), mcsd::ConfigError);
  EXPECT_THROW(mcsd::build_sequences(m, 6, 25), mcsd::ConfigError);
}

TEST(MonthlySplit, RemainderGoesToEarliestBlocks) {
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 11; ++i) minutes.push_back(i * 15);
  const std::string path = make_manifest("split_eleven", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  auto [train, test] = mcsd::split_monthly(m, 5, 4);
  EXPECT_EQ(train.size(), 9u);
  EXPECT_EQ(test, (std::vector<int64_t>{9, 10}));
  auto [train0, test0] = mcsd::split_monthly(m, 5, 0);
  EXPECT_EQ(test0, (std::vector<int64_t>{0, 1, 2}));
}

TEST(MonthlySplit, EvenSizesSplitEvenly) {
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 10; ++i) minutes.push_back(i * 15);
  const std::string path = make_manifest("split_even", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  auto [train, test] = mcsd::split_monthly(m, 5, 2);
  EXPECT_EQ(test, (std::vector<int64_t>{4, 5}));
  EXPECT_EQ(train.size(), 8u);
}

TEST(MonthlySplit, SidesAreDisjointAndCoverEveryFrame) {
  const int64_t jan = mcsd::detail::days_from_civil(2024, 1, 10) * 1440;
  const int64_t feb = mcsd::detail::days_from_civil(2024, 2, 10) * 1440;
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 10; ++i) minutes.push_back(jan + i * 15);
  for (int64_t i = 0; i < 11; ++i) minutes.push_back(feb + i * 15);
  const std::string path = make_manifest("split_months", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  auto [train, test] = mcsd::split_monthly(m, 5, 4);
  EXPECT_EQ(test.size(), 4u);
  EXPECT_EQ(train.size() + test.size(), m.records.size());
  std::set<int64_t> seen(train.begin(), train.end());
  for (int64_t i : test) EXPECT_TRUE(seen.insert(i).second) << "index " << i << " on both sides";
  EXPECT_EQ(seen.size(), m.records.size());
}

TEST(MonthlySplit, EachMonthContributesContiguousTestBlock) {
  std::vector<int64_t> minutes;
  for (int64_t i = 0; i < 25; ++i) minutes.push_back(i * 15);
  const std::string path = make_manifest("split_contig", minute_rows(minutes));
  DatasetManifest m = mcsd::load_manifest(path);
  auto [train, test] = mcsd::split_monthly(m, 5, 2);
  ASSERT_EQ(test.size(), 5u);
  for (size_t i = 1; i < test.size(); ++i) EXPECT_EQ(test[i], test[i - 1] + 1);
}

TEST(MonthlySplit, RejectsBadArgumentsAndTinyMonths) {
  const std::string path = make_manifest("split_tiny", minute_rows({0, 15, 30}));
  DatasetManifest m = mcsd::load_manifest(path);
  EXPECT_THROW(mcsd::split_monthly(m, 0, 0), mcsd::ConfigError);
  EXPECT_THROW(mcsd::split_monthly(m, 5, 5), mcsd::ConfigError);
  EXPECT_THROW(mcsd::split_monthly(m, 5, 4), mcsd::DataError);
}

TEST(LoadSample, ScalesImagesAndBinarizesMasks) {
  const std::string dir = temp_dir("load_values");
  ImageU8 img;
  img.height = 2;
  img.width = 2;
  img.channels = 1;
  img.pixels = {0, 51, 128, 255};
  mcsd::write_png_gray(dir + "/img.png", img);
  ImageU8 msk = img;
  msk.pixels = {0, 127, 128, 255};
  mcsd::write_png_gray(dir + "/msk.png", msk);
  std::ofstream(dir + "/manifest.csv") << "timestamp,image,mask\n15,img.png,msk.png\n";
  DatasetManifest m = mcsd::load_manifest(dir + "/manifest.csv");
  auto sample = mcsd::load_sample<double>(m, {0});
  EXPECT_EQ(sample.images.shape(), (mcsd::Shape{1, 1, 2, 2}));
  EXPECT_DOUBLE_EQ(sample.images.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(sample.images.at(0, 0, 0, 1), 51.0 / 255.0);
  EXPECT_DOUBLE_EQ(sample.images.at(0, 0, 1, 1), 1.0);
  EXPECT_EQ(sample.masks.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(sample.masks.at(0, 0, 0, 1), 0.0);
  EXPECT_EQ(sample.masks.at(0, 0, 1, 0), 1.0);
  EXPECT_EQ(sample.masks.at(0, 0, 1, 1), 1.0);
  auto raw = mcsd::load_sample<double>(m, {0}, false);
  EXPECT_DOUBLE_EQ(raw.images.at(0, 0, 0, 1), 51.0);
}

TEST(LoadSample, StacksFramesInOrder) {
  const std::string dir = temp_dir("load_stack");
  make_png(dir + "/a.png", 3, 5, 10);
  make_png(dir + "/b.png", 3, 5, 20);
  make_png(dir + "/m.png", 3, 5, 255);
  std::ofstream(dir + "/manifest.csv") << "timestamp,image,mask\n15,a.png,m.png\n30,b.png,m.png\n";
  DatasetManifest m = mcsd::load_manifest(dir + "/manifest.csv");
  auto sample = mcsd::load_sample<float>(m, {0, 1});
  EXPECT_EQ(sample.images.shape(), (mcsd::Shape{2, 1, 3, 5}));
  EXPECT_NEAR(sample.images.at(0, 0, 0, 0), 10.0f / 255.0f, 1e-7);
  EXPECT_NEAR(sample.images.at(1, 0, 0, 0), 20.0f / 255.0f, 1e-7);
  EXPECT_EQ(sample.frames, (std::vector<int64_t>{0, 1}));
}

TEST(LoadSample, RejectsMismatchedDims) {
  const std::string dir = temp_dir("load_mismatch");
  make_png(dir + "/img.png", 4, 4, 10);
  make_png(dir + "/msk.png", 4, 5, 255);
  std::ofstream(dir + "/manifest.csv") << "timestamp,image,mask\n15,img.png,msk.png\n";
  DatasetManifest m = mcsd::load_manifest(dir + "/manifest.csv");
  EXPECT_THROW(mcsd::load_sample<double>(m, {0}), mcsd::DataError);
  EXPECT_THROW(mcsd::load_sample<double>(m, {}), mcsd::DataError);
}

SyntheticConfig small_synth() {
  SyntheticConfig cfg;
  cfg.scenes = 2;
  cfg.frames_per_scene = 12;
  cfg.image_size = 32;
  cfg.seed = 99;
  return cfg;
}

TEST(Synth, GeneratorIsByteDeterministic) {
  SyntheticConfig cfg = small_synth();
  const std::string a = temp_dir("synth_det_a");
  const std::string b = temp_dir("synth_det_b");
  DatasetManifest ma = mcsd::synth_generate(cfg, a);
  DatasetManifest mb = mcsd::synth_generate(cfg, b);
  EXPECT_EQ(slurp(a + "/manifest.csv"), slurp(b + "/manifest.csv"));
  ASSERT_EQ(ma.records.size(), mb.records.size());
  for (size_t i = 0; i < ma.records.size(); ++i) {
    EXPECT_EQ(slurp(ma.records[i].image), slurp(mb.records[i].image));
    EXPECT_EQ(slurp(ma.records[i].mask), slurp(mb.records[i].mask));
  }
}

TEST(Synth, CoverageStaysInsideConfiguredBand) {
  SyntheticConfig cfg = small_synth();
  const std::string dir = temp_dir("synth_cov");
  DatasetManifest m = mcsd::synth_generate(cfg, dir);
  ASSERT_EQ(m.records.size(), 24u);
  for (size_t i = 0; i < m.records.size(); ++i) {
    auto sample = mcsd::load_sample<double>(m, {static_cast<int64_t>(i)});
    const double cov = mcsd::coverage_fraction(sample.masks);
    EXPECT_GE(cov, cfg.coverage_lo) << "frame " << i;
    EXPECT_LE(cov, cfg.coverage_hi) << "frame " << i;
  }
}

TEST(Synth, WithoutFlickerBrightPixelsMatchMaskExactly) {
  SyntheticConfig cfg = small_synth();
  cfg.flicker_rate = 0.0;
  const std::string dir = temp_dir("synth_noflicker");
  DatasetManifest m = mcsd::synth_generate(cfg, dir);
  for (size_t i = 0; i < m.records.size(); ++i) {
    ImageU8 img = mcsd::read_png_gray(m.records[i].image);
    ImageU8 msk = mcsd::read_png_gray(m.records[i].mask);
    for (size_t p = 0; p < img.pixels.size(); ++p)
      EXPECT_EQ(img.pixels[p] >= 128, msk.pixels[p] >= 128) << "frame " << i << " pixel " << p;
  }
}

TEST(Synth, FlickerAddsBrightPixelsOutsideMask) {
  SyntheticConfig cfg = small_synth();
  cfg.flicker_rate = 4.0;
  const std::string dir = temp_dir("synth_flicker");
  DatasetManifest m = mcsd::synth_generate(cfg, dir);
  int64_t unlabeled_bright = 0;
  for (size_t i = 0; i < m.records.size(); ++i) {
    ImageU8 img = mcsd::read_png_gray(m.records[i].image);
    ImageU8 msk = mcsd::read_png_gray(m.records[i].mask);
    for (size_t p = 0; p < img.pixels.size(); ++p)
      if (img.pixels[p] >= 128 && msk.pixels[p] < 128) ++unlabeled_bright;
  }
  EXPECT_GT(unlabeled_bright, 100);
}

TEST(Synth, ScenesNeverShareAWindow) {
  SyntheticConfig cfg = small_synth();
  const std::string dir = temp_dir("synth_windows");
  DatasetManifest m = mcsd::synth_generate(cfg, dir);
  auto seqs = mcsd::build_sequences(m, 6, 30);
  EXPECT_EQ(seqs.size(), 4u);
  for (const auto& w : seqs) {
    const int64_t scene = w.front() / cfg.frames_per_scene;
    for (int64_t idx : w) EXPECT_EQ(idx / cfg.frames_per_scene, scene);
  }
  for (int64_t interval : {60, 120}) {
    for (const auto& w : mcsd::build_sequences(m, 2, interval)) {
      const int64_t scene = w.front() / cfg.frames_per_scene;
      for (int64_t idx : w) EXPECT_EQ(idx / cfg.frames_per_scene, scene);
    }
  }
}

TEST(Synth, ValidatesConfig) {
  SyntheticConfig cfg = small_synth();
  cfg.coverage_lo = 0.0;
  EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  cfg = small_synth();
  cfg.coverage_hi = 0.25;
  EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  cfg = small_synth();
  cfg.blobs_min = 3;
  cfg.blobs_max = 2;
  EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  cfg = small_synth();
  cfg.image_size = 8;
  EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
}

}  // namespace
