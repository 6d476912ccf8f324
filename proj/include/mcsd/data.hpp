#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/png_io.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

struct FrameRecord {
  int64_t minutes = 0;
  std::string image;
  std::string mask;
  int64_t month_key = 0;
};

// Records are kept sorted by timestamp. Paths are stored resolved, relative
// to the manifest location.
struct DatasetManifest {
  std::vector<FrameRecord> records;
  int64_t cadence_minutes = 15;
};

// One training example: images [T,1,H,W] scaled to [0,1], masks [T,1,H,W]
// binarized, plus the manifest rows it was assembled from.
template <typename T>
struct SequenceSample {
  Tensor<T> images;
  Tensor<T> masks;
  std::vector<int64_t> frames;
};

namespace detail {

// Howard Hinnant's civil-date algorithms; days relative to 1970-01-01.
inline int64_t days_from_civil(int64_t y, int64_t m, int64_t d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

inline void civil_from_days(int64_t z, int64_t& y, int64_t& m, int64_t& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = yoe + era * 400 + (m <= 2);
}

inline int64_t month_key_of_minutes(int64_t minutes) {
  int64_t days = minutes / 1440;
  if (minutes < 0 && minutes % 1440 != 0) --days;
  int64_t y = 0, m = 0, d = 0;
  civil_from_days(days, y, m, d);
  return y * 12 + (m - 1);
}

// Accepts epoch-minutes integers or ISO-8601 UTC (YYYY-MM-DDTHH:MM[:SS][Z]).
inline int64_t parse_timestamp(const std::string& s, int64_t row) {
  auto bad = [&](const std::string& why) {
    throw DataError("manifest row " + std::to_string(row) + ": " + why + " in timestamp '" + s + "'");
  };
  if (s.empty()) bad("empty value");
  bool digits = true;
  for (size_t i = 0; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i])) && !(i == 0 && s[i] == '-')) digits = false;
  if (digits) {
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      bad("unparseable integer");
    }
  }
  int64_t y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char t = 0;
  std::istringstream in(s);
  char dash1 = 0, dash2 = 0, colon = 0;
  in >> y >> dash1 >> mo >> dash2 >> d >> t >> h >> colon >> mi;
  if (!in || dash1 != '-' || dash2 != '-' || (t != 'T' && t != ' ') || colon != ':') bad("malformed date");
  if (in.peek() == ':') {
    char c = 0;
    in >> c >> sec;
    if (!in) bad("malformed seconds");
  }
  if (in.peek() == 'Z') in.get();
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59) bad("out-of-range field");
  if (sec != 0) bad("sub-minute precision unsupported");
  return days_from_civil(y, mo, d) * 1440 + h * 60 + mi;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

// CSV with header timestamp,image,mask. Rows are sorted by timestamp;
// duplicates and missing referenced files are reported with their row number.
// Cadence defaults to the smallest gap between consecutive frames; pass
// cadence_minutes to override.
inline DatasetManifest load_manifest(const std::string& path, int64_t cadence_minutes = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  const std::filesystem::path root = std::filesystem::path(path).parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest " + path);
  {
    auto header = detail::split_csv_row(line);
    if (header.size() != 3 || header[0] != "timestamp" || header[1] != "image" || header[2] != "mask")
      throw DataError("manifest " + path + " must start with header timestamp,image,mask");
  }
  DatasetManifest manifest;
  std::vector<std::pair<FrameRecord, int64_t>> rows;
  int64_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_row(line);
    if (fields.size() != 3)
      throw DataError("manifest row " + std::to_string(row) + ": expected 3 fields, got " +
                      std::to_string(fields.size()));
    FrameRecord rec;
    rec.minutes = detail::parse_timestamp(fields[0], row);
    rec.month_key = detail::month_key_of_minutes(rec.minutes);
    rec.image = (root / fields[1]).string();
    rec.mask = (root / fields[2]).string();
    for (const std::string& p : {rec.image, rec.mask})
      if (!std::filesystem::exists(p))
        throw DataError("manifest row " + std::to_string(row) + ": missing file " + p);
    rows.emplace_back(std::move(rec), row);
  }
  if (rows.empty()) throw DataError("manifest " + path + " has no data rows");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first.minutes < b.first.minutes; });
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].first.minutes == rows[i - 1].first.minutes)
      throw DataError("manifest rows " + std::to_string(rows[i - 1].second) + " and " +
                      std::to_string(rows[i].second) + " share timestamp " +
                      std::to_string(rows[i].first.minutes));
  manifest.records.reserve(rows.size());
  for (auto& [rec, r] : rows) manifest.records.push_back(std::move(rec));
  if (cadence_minutes > 0) {
    manifest.cadence_minutes = cadence_minutes;
  } else {
    int64_t cadence = 0;
    for (size_t i = 1; i < manifest.records.size(); ++i) {
      const int64_t gap = manifest.records[i].minutes - manifest.records[i - 1].minutes;
      if (cadence == 0 || gap < cadence) cadence = gap;
    }
    manifest.cadence_minutes = cadence > 0 ? cadence : 15;
  }
  return manifest;
}

// Every window of `width` frames spaced exactly `interval_minutes` apart,
// sliding one frame at a time. Gaps discard any window that would span them.
inline std::vector<std::vector<int64_t>> build_sequences(const DatasetManifest& manifest, int64_t width = 6,
                                                         int64_t interval_minutes = 30) {
  if (width < 1) throw ConfigError("sequence width must be positive");
  if (interval_minutes < 1) throw ConfigError("interval must be positive");
  if (manifest.cadence_minutes < 1) throw ConfigError("manifest cadence must be positive");
  if (interval_minutes % manifest.cadence_minutes != 0)
    throw ConfigError("interval " + std::to_string(interval_minutes) + " not divisible by cadence " +
                      std::to_string(manifest.cadence_minutes));
  std::unordered_map<int64_t, int64_t> index_by_time;
  index_by_time.reserve(manifest.records.size());
  for (size_t i = 0; i < manifest.records.size(); ++i)
    index_by_time.emplace(manifest.records[i].minutes, static_cast<int64_t>(i));
  std::vector<std::vector<int64_t>> sequences;
  for (size_t start = 0; start < manifest.records.size(); ++start) {
    std::vector<int64_t> window = {static_cast<int64_t>(start)};
    const int64_t t0 = manifest.records[start].minutes;
    for (int64_t k = 1; k < width; ++k) {
      auto it = index_by_time.find(t0 + k * interval_minutes);
      if (it == index_by_time.end()) break;
      window.push_back(it->second);
    }
    if (static_cast<int64_t>(window.size()) == width) sequences.push_back(std::move(window));
  }
  return sequences;
}

// Per month: contiguous-in-time blocks of near-equal size, remainder spread
// over the earliest blocks; block `test_group` goes to test, the rest to
// train. Returns frame indices into manifest.records.
inline std::pair<std::vector<int64_t>, std::vector<int64_t>> split_monthly(const DatasetManifest& manifest,
                                                                           int64_t groups = 5,
                                                                           int64_t test_group = 4) {
  if (groups < 1) throw ConfigError("groups must be positive");
  if (test_group < 0 || test_group >= groups)
    throw ConfigError("test_group " + std::to_string(test_group) + " out of range for " + std::to_string(groups) +
                      " groups");
  std::map<int64_t, std::vector<int64_t>> by_month;
  for (size_t i = 0; i < manifest.records.size(); ++i)
    by_month[manifest.records[i].month_key].push_back(static_cast<int64_t>(i));
  std::vector<int64_t> train, test;
  for (const auto& [month, indices] : by_month) {
    const int64_t n = static_cast<int64_t>(indices.size());
    if (n < groups)
      throw DataError("month key " + std::to_string(month) + " has " + std::to_string(n) + " frames for " +
                      std::to_string(groups) + " groups");
    const int64_t base = n / groups, rem = n % groups;
    int64_t offset = 0;
    for (int64_t g = 0; g < groups; ++g) {
      const int64_t len = base + (g < rem ? 1 : 0);
      auto& side = (g == test_group) ? test : train;
      for (int64_t j = 0; j < len; ++j) side.push_back(indices[offset + j]);
      offset += len;
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

// Sub-manifest with the chosen frames; indices must be ascending.
inline DatasetManifest subset_manifest(const DatasetManifest& manifest, const std::vector<int64_t>& indices) {
  DatasetManifest sub;
  sub.cadence_minutes = manifest.cadence_minutes;
  sub.records.reserve(indices.size());
  int64_t prev = -1;
  for (int64_t i : indices) {
    check(i >= 0 && i < static_cast<int64_t>(manifest.records.size()), "frame index out of range");
    check(i > prev, "subset indices must be strictly ascending");
    sub.records.push_back(manifest.records[static_cast<size_t>(i)]);
    prev = i;
  }
  return sub;
}

// build_sequences per interval, for the time-step sweep.
inline std::vector<std::pair<int64_t, std::vector<std::vector<int64_t>>>> interval_variants(
    const DatasetManifest& manifest, const std::vector<int64_t>& intervals = {15, 30, 60, 120}, int64_t width = 6) {
  std::vector<std::pair<int64_t, std::vector<std::vector<int64_t>>>> out;
  out.reserve(intervals.size());
  for (int64_t interval : intervals) out.emplace_back(interval, build_sequences(manifest, width, interval));
  return out;
}

// Reads the frames of one sequence. Images scale to [0,1] when normalize is
// set (raw 0..255 otherwise); mask pixels >= 128 become 1.
template <typename T>
SequenceSample<T> load_sample(const DatasetManifest& manifest, const std::vector<int64_t>& frame_indices,
                              bool normalize = true) {
  if (frame_indices.empty()) throw DataError("empty frame index list");
  SequenceSample<T> sample;
  sample.frames = frame_indices;
  const int64_t t = static_cast<int64_t>(frame_indices.size());
  int64_t H = 0, W = 0;
  for (int64_t k = 0; k < t; ++k) {
    const int64_t idx = frame_indices[static_cast<size_t>(k)];
    check(idx >= 0 && idx < static_cast<int64_t>(manifest.records.size()), "frame index out of range");
    const FrameRecord& rec = manifest.records[static_cast<size_t>(idx)];
    ImageU8 img = read_png_gray(rec.image);
    ImageU8 msk = read_png_gray(rec.mask);
    if (img.height != msk.height || img.width != msk.width)
      throw DataError("image/mask dims differ for " + rec.image + ": " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " vs " + std::to_string(msk.height) + "x" +
                      std::to_string(msk.width));
    if (k == 0) {
      H = img.height;
      W = img.width;
      sample.images = Tensor<T>::zeros({t, 1, H, W});
      sample.masks = Tensor<T>::zeros({t, 1, H, W});
    } else if (img.height != H || img.width != W) {
      throw DataError("frame dims changed mid-sequence at " + rec.image);
    }
    T* xi = sample.images.data() + k * H * W;
    T* yi = sample.masks.data() + k * H * W;
    for (int64_t p = 0; p < H * W; ++p) {
      const uint8_t v = img.pixels[static_cast<size_t>(p)];
      xi[p] = normalize ? static_cast<T>(v) / T(255) : static_cast<T>(v);
      yi[p] = msk.pixels[static_cast<size_t>(p)] >= 128 ? T(1) : T(0);
    }
  }
  return sample;
}

}  // namespace mcsd
