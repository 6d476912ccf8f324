#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }

  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts& a, const ConfusionCounts& b) {
    return a.tp == b.tp && a.fp == b.fp && a.fn == b.fn && a.tn == b.tn;
  }
};

// Pixel-level confusion between two binary masks of identical shape.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& gt) {
  check(pred.defined() && gt.defined(), "confusion inputs must be defined");
  check(pred.shape() == gt.shape(),
        "confusion shape mismatch: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  const T* p = pred.data();
  const T* g = gt.data();
  ConfusionCounts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    if (p[i] != T(0) && p[i] != T(1))
      throw DataError("prediction at flat index " + std::to_string(i) + " is not binary");
    if (g[i] != T(0) && g[i] != T(1))
      throw DataError("ground truth at flat index " + std::to_string(i) + " is not binary");
    if (g[i] == T(1))
      (p[i] == T(1) ? c.tp : c.fn) += 1;
    else
      (p[i] == T(1) ? c.fp : c.tn) += 1;
  }
  return c;
}

// Probability of detection, TP/(TP+FN). Empty when nothing was positive.
inline std::optional<double> pod(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

// False alarm ratio, FP/(TP+FP). Empty when nothing was predicted positive.
inline std::optional<double> far(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.fp) / static_cast<double>(c.tp + c.fp);
}

// Critical success index, TP/(TP+FP+FN): intersection over union of the
// positive regions. Empty when both masks are entirely negative.
inline std::optional<double> csi(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
}

// Fraction of positive pixels in a binary mask.
template <typename T>
double coverage_fraction(const Tensor<T>& mask) {
  check(mask.defined() && mask.numel() > 0, "coverage of empty mask");
  const T* m = mask.data();
  int64_t pos = 0;
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (m[i] != T(0) && m[i] != T(1))
      throw DataError("mask value at flat index " + std::to_string(i) + " is not binary");
    pos += m[i] == T(1) ? 1 : 0;
  }
  return static_cast<double>(pos) / static_cast<double>(mask.numel());
}

// Half-open coverage interval [lo, hi) in fraction units.
struct CoverageBin {
  double lo = 0.0;
  double hi = 0.0;
};

// One-percent-wide bins up to 5%, then everything denser than that. Together
// the bins partition [0, 1], so every sample lands in exactly one.
inline std::vector<CoverageBin> default_coverage_bins() {
  std::vector<CoverageBin> bins;
  for (int i = 0; i < 5; ++i) bins.push_back({0.01 * i, 0.01 * (i + 1)});
  bins.push_back({0.05, std::numeric_limits<double>::infinity()});
  return bins;
}

inline void validate_bins(const std::vector<CoverageBin>& bins) {
  if (bins.empty()) throw ConfigError("coverage bins must be nonempty");
  if (bins.front().lo != 0.0) throw ConfigError("first coverage bin must start at 0");
  for (size_t i = 0; i < bins.size(); ++i) {
    if (!(bins[i].hi > bins[i].lo)) throw ConfigError("coverage bin " + std::to_string(i) + " is empty or inverted");
    if (i + 1 < bins.size() && bins[i].hi != bins[i + 1].lo)
      throw ConfigError("coverage bins leave a gap after bin " + std::to_string(i));
  }
  if (!std::isinf(bins.back().hi)) throw ConfigError("last coverage bin must be open-ended");
}

inline size_t bin_index(double coverage, const std::vector<CoverageBin>& bins) {
  validate_bins(bins);
  if (!(coverage >= 0.0)) throw ConfigError("coverage must be nonnegative");
  for (size_t i = 0; i < bins.size(); ++i)
    if (coverage >= bins[i].lo && coverage < bins[i].hi) return i;
  throw ConfigError("coverage " + std::to_string(coverage) + " falls outside all bins");
}

struct BinReport {
  CoverageBin bin;
  int64_t samples = 0;
  ConfusionCounts counts;
};

struct MetricsReport {
  ConfusionCounts overall;
  int64_t samples = 0;
  std::vector<BinReport> bins;
};

// Micro-averaged evaluation: pixels pool into one confusion table overall and
// one per coverage bin. Each sample is binned by the positive fraction of its
// ground truth; with equally sized frames that fraction equals the mean of
// the per-frame coverages.
template <typename T>
MetricsReport binned_evaluate(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& gts,
                              const std::vector<CoverageBin>& bins = default_coverage_bins()) {
  validate_bins(bins);
  check(preds.size() == gts.size(), "prediction and ground-truth sample counts differ");
  MetricsReport report;
  report.bins.resize(bins.size());
  for (size_t i = 0; i < bins.size(); ++i) report.bins[i].bin = bins[i];
  for (size_t s = 0; s < preds.size(); ++s) {
    const ConfusionCounts c = confusion(preds[s], gts[s]);
    const size_t b = bin_index(coverage_fraction(gts[s]), bins);
    report.bins[b].counts += c;
    report.bins[b].samples += 1;
    report.overall += c;
    report.samples += 1;
  }
  return report;
}

namespace detail {

inline std::string metric_cell(const std::optional<double>& v) {
  if (!v.has_value()) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(5) << *v;
  return os.str();
}

inline std::string bin_label(const CoverageBin& bin) {
  std::ostringstream os;
  os << '[' << std::fixed << std::setprecision(0) << bin.lo * 100.0 << "%,";
  if (std::isinf(bin.hi))
    os << "100%]";
  else
    os << std::fixed << std::setprecision(0) << bin.hi * 100.0 << "%)";
  return os.str();
}

}  // namespace detail

inline std::string format_metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "coverage" << std::right << std::setw(9) << "samples" << std::setw(12) << "tp"
     << std::setw(12) << "fp" << std::setw(12) << "fn" << std::setw(10) << "pod" << std::setw(10) << "far"
     << std::setw(10) << "csi" << '\n';
  auto row = [&os](const std::string& label, int64_t samples, const ConfusionCounts& c) {
    os << std::left << std::setw(12) << label << std::right << std::setw(9) << samples << std::setw(12) << c.tp
       << std::setw(12) << c.fp << std::setw(12) << c.fn << std::setw(10) << detail::metric_cell(pod(c))
       << std::setw(10) << detail::metric_cell(far(c)) << std::setw(10) << detail::metric_cell(csi(c)) << '\n';
  };
  for (const BinReport& b : report.bins) row(detail::bin_label(b.bin), b.samples, b.counts);
  row("overall", report.samples, report.overall);
  return os.str();
}

// Stable key=value lines for scripts; undefined ratios print as "undefined".
inline std::string format_metrics_kv(const MetricsReport& report) {
  auto value = [](const std::optional<double>& v) { return v.has_value() ? format_full(*v) : "undefined"; };
  std::ostringstream os;
  os << "samples=" << report.samples << '\n';
  os << "tp=" << report.overall.tp << '\n';
  os << "fp=" << report.overall.fp << '\n';
  os << "fn=" << report.overall.fn << '\n';
  os << "tn=" << report.overall.tn << '\n';
  os << "pod=" << value(pod(report.overall)) << '\n';
  os << "far=" << value(far(report.overall)) << '\n';
  os << "csi=" << value(csi(report.overall)) << '\n';
  return os.str();
}

inline std::string format_bins_csv(const MetricsReport& report) {
  auto value = [](const std::optional<double>& v) { return v.has_value() ? format_full(*v) : ""; };
  std::ostringstream os;
  os << "bin_lo,bin_hi,samples,tp,fp,fn,tn,pod,far,csi\n";
  for (const BinReport& b : report.bins) {
    os << format_full(b.bin.lo) << ',' << (std::isinf(b.bin.hi) ? "inf" : format_full(b.bin.hi)) << ',' << b.samples
       << ',' << b.counts.tp << ',' << b.counts.fp << ',' << b.counts.fn << ',' << b.counts.tn << ','
       << value(pod(b.counts)) << ',' << value(far(b.counts)) << ',' << value(csi(b.counts)) << '\n';
  }
  return os.str();
}

}  // namespace mcsd
