#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/data.hpp"
#include "mcsd/png_io.hpp"
#include "mcsd/rng.hpp"

namespace mcsd {

// Scenes of bright elliptical blobs that drift and grow over the frames of a
// sequence. Persistent blobs are labeled; flicker distractors look the same
// in a single frame but vanish in the next and stay out of the masks, so
// separating them requires temporal context. Scenes are spaced far enough
// apart in time that no sliding window can straddle two of them.
struct SyntheticConfig {
  uint64_t seed = 7;
  int64_t scenes = 8;
  int64_t frames_per_scene = 12;
  int64_t image_size = 64;
  int64_t blobs_min = 1;
  int64_t blobs_max = 3;
  double speed_min = 0.3;      // pixels per frame
  double speed_max = 1.5;
  double growth_min = 0.99;    // radius factor per frame
  double growth_max = 1.02;
  double flicker_rate = 1.0;   // expected distractors per frame
  double coverage_lo = 0.02;   // per-frame positive fraction bounds
  double coverage_hi = 0.12;
  int64_t cadence_minutes = 15;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (scenes < 1) fail("scenes must be positive");
    if (frames_per_scene < 1) fail("frames_per_scene must be positive");
    if (image_size < 16) fail("image_size must be at least 16");
    if (blobs_min < 1 || blobs_max < blobs_min) fail("blob count range is invalid");
    if (speed_min < 0.0 || speed_max < speed_min) fail("speed range is invalid");
    if (!(growth_min >= 0.9 && growth_max >= growth_min && growth_max <= 1.1))
      fail("growth factors must lie in [0.9, 1.1]");
    if (!(flicker_rate >= 0.0 && flicker_rate <= 8.0)) fail("flicker_rate must lie in [0, 8]");
    if (!(coverage_lo > 0.0 && coverage_hi > coverage_lo && coverage_hi < 0.2))
      fail("coverage bounds must satisfy 0 < lo < hi < 0.2");
    if (cadence_minutes < 1) fail("cadence_minutes must be positive");
  }
};

namespace detail {

struct Blob {
  double cx, cy, rx, ry, vx, vy, growth, intensity;
};

inline void rasterize_ellipse(std::vector<uint8_t>& mask, int64_t size, double cx, double cy, double rx, double ry) {
  const int64_t r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - ry)));
  const int64_t r1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cy + ry)));
  const int64_t c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - rx)));
  const int64_t c1 = std::min<int64_t>(size - 1, static_cast<int64_t>(std::ceil(cx + rx)));
  for (int64_t r = r0; r <= r1; ++r) {
    const double dy = (static_cast<double>(r) - cy) / ry;
    for (int64_t c = c0; c <= c1; ++c) {
      const double dx = (static_cast<double>(c) - cx) / rx;
      if (dx * dx + dy * dy <= 1.0) mask[static_cast<size_t>(r * size + c)] = 1;
    }
  }
}

// Frame-by-frame blob masks for one scene at a given radius scale.
inline std::vector<std::vector<uint8_t>> render_scene_masks(const std::vector<Blob>& blobs, int64_t frames,
                                                            int64_t size, double scale) {
  std::vector<std::vector<uint8_t>> masks(static_cast<size_t>(frames));
  for (int64_t f = 0; f < frames; ++f) {
    std::vector<uint8_t>& m = masks[static_cast<size_t>(f)];
    m.assign(static_cast<size_t>(size * size), 0);
    for (const Blob& b : blobs) {
      const double g = std::pow(b.growth, static_cast<double>(f));
      rasterize_ellipse(m, size, b.cx + b.vx * static_cast<double>(f), b.cy + b.vy * static_cast<double>(f),
                        b.rx * scale * g, b.ry * scale * g);
    }
  }
  return masks;
}

inline double mask_coverage(const std::vector<uint8_t>& m) {
  int64_t pos = 0;
  for (uint8_t v : m) pos += v;
  return static_cast<double>(pos) / static_cast<double>(m.size());
}

}  // namespace detail

// Writes images/, masks/ and manifest.csv under out_dir and returns the
// loaded manifest. Identical config and seed produce identical bytes.
inline DatasetManifest synth_generate(const SyntheticConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  Rng rng(cfg.seed);
  const int64_t S = cfg.image_size;
  const double area = static_cast<double>(S * S);
  std::ostringstream csv;
  csv << "timestamp,image,mask\n";

  // Nine idle cadences between scenes: longer than the widest supported
  // window spacing (interval 120 at cadence 15), so windows never straddle.
  const int64_t scene_stride = cfg.frames_per_scene + 9;

  for (int64_t scene = 0; scene < cfg.scenes; ++scene) {
    const int64_t nblobs = cfg.blobs_min + rng.below(cfg.blobs_max - cfg.blobs_min + 1);
    const double target = 0.5 * (cfg.coverage_lo + cfg.coverage_hi);
    const double radius = std::sqrt(target * area / (3.14159265358979323846 * static_cast<double>(nblobs)));
    std::vector<detail::Blob> blobs;
    for (int64_t b = 0; b < nblobs; ++b) {
      detail::Blob blob;
      blob.cx = rng.uniform(0.3 * static_cast<double>(S), 0.7 * static_cast<double>(S));
      blob.cy = rng.uniform(0.3 * static_cast<double>(S), 0.7 * static_cast<double>(S));
      const double aspect = rng.uniform(0.7, 1.4);
      blob.rx = radius * aspect;
      blob.ry = radius / aspect;
      const double angle = rng.uniform(0.0, 6.283185307179586);
      const double drift_cap = static_cast<double>(S) / (4.0 * static_cast<double>(cfg.frames_per_scene));
      const double speed = std::min(rng.uniform(cfg.speed_min, cfg.speed_max), drift_cap);
      blob.vx = speed * std::cos(angle);
      blob.vy = speed * std::sin(angle);
      blob.growth = rng.uniform(cfg.growth_min, cfg.growth_max);
      blob.intensity = rng.uniform(0.65, 0.95);
      blobs.push_back(blob);
    }

    // Pure geometric adjustment, no further random draws: scale the radii
    // until every frame's coverage is inside the configured band, damping
    // growth toward 1 when the band is violated on both sides at once.
    double scale = 1.0;
    std::vector<std::vector<uint8_t>> masks;
    bool settled = false;
    for (int iter = 0; iter < 500 && !settled; ++iter) {
      masks = detail::render_scene_masks(blobs, cfg.frames_per_scene, S, scale);
      bool below = false, above = false;
      for (const auto& m : masks) {
        const double cov = detail::mask_coverage(m);
        below = below || cov < cfg.coverage_lo;
        above = above || cov > cfg.coverage_hi;
      }
      if (!below && !above) {
        settled = true;
      } else if (below && above) {
        for (detail::Blob& b : blobs) b.growth = 1.0 + (b.growth - 1.0) * 0.5;
      } else if (below) {
        scale *= 1.1;
      } else {
        scale *= 0.9;
      }
    }
    if (!settled)
      throw NumericError("scene " + std::to_string(scene) + " could not reach the target coverage band");

    for (int64_t f = 0; f < cfg.frames_per_scene; ++f) {
      const std::vector<uint8_t>& m = masks[static_cast<size_t>(f)];
      std::vector<double> pixels(static_cast<size_t>(S * S));
      for (double& v : pixels) v = rng.uniform(0.05, 0.2);
      for (const detail::Blob& b : blobs) {
        const double g = std::pow(b.growth, static_cast<double>(f));
        std::vector<uint8_t> one(static_cast<size_t>(S * S), 0);
        detail::rasterize_ellipse(one, S, b.cx + b.vx * static_cast<double>(f),
                                  b.cy + b.vy * static_cast<double>(f), b.rx * scale * g, b.ry * scale * g);
        for (size_t i = 0; i < one.size(); ++i)
          if (one[i]) pixels[i] = std::max(pixels[i], b.intensity);
      }
      // Distractors draw their center, size and intensity from the same
      // distributions as the blobs, so a single frame carries no cue that
      // separates them; only persistence across frames does.
      int64_t flickers = static_cast<int64_t>(std::floor(cfg.flicker_rate));
      if (rng.uniform() < cfg.flicker_rate - std::floor(cfg.flicker_rate)) ++flickers;
      for (int64_t k = 0; k < flickers; ++k) {
        const double fx = rng.uniform(0.3 * static_cast<double>(S), 0.7 * static_cast<double>(S));
        const double fy = rng.uniform(0.3 * static_cast<double>(S), 0.7 * static_cast<double>(S));
        const double fa = rng.uniform(0.7, 1.4);
        const double frx = radius * scale * fa;
        const double fry = radius * scale / fa;
        const double fi = rng.uniform(0.65, 0.95);
        std::vector<uint8_t> one(static_cast<size_t>(S * S), 0);
        detail::rasterize_ellipse(one, S, fx, fy, frx, fry);
        for (size_t i = 0; i < one.size(); ++i)
          if (one[i]) pixels[i] = std::max(pixels[i], fi);
      }

      ImageU8 img;
      img.height = S;
      img.width = S;
      img.channels = 1;
      img.pixels.resize(static_cast<size_t>(S * S));
      for (size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
      ImageU8 msk;
      msk.height = S;
      msk.width = S;
      msk.channels = 1;
      msk.pixels.resize(static_cast<size_t>(S * S));
      for (size_t i = 0; i < msk.pixels.size(); ++i) msk.pixels[i] = m[i] ? 255 : 0;

      const int64_t index = scene * cfg.frames_per_scene + f;
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << index << ".png";
      write_png_gray((fs::path(out_dir) / "images" / name.str()).string(), img);
      write_png_gray((fs::path(out_dir) / "masks" / name.str()).string(), msk);
      const int64_t minutes = (scene * scene_stride + f) * cfg.cadence_minutes;
      csv << minutes << ",images/" << name.str() << ",masks/" << name.str() << '\n';
    }
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  std::ofstream(manifest_path, std::ios::binary) << csv.str();
  return load_manifest(manifest_path, cfg.cadence_minutes);
}

}  // namespace mcsd
