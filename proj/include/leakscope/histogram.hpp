#pragma once

// Plug-in (histogram) entropy and mutual information.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include "leakscope/bitplane.hpp"
#include "leakscope/error.hpp"
#include "leakscope/image.hpp"

namespace leakscope {

enum class Units { Bits, Nats };
enum class EstimatorKind { Histogram, Mine, MineEmbedding };

inline std::string to_string(Units u) { return u == Units::Bits ? "bits" : "nats"; }

inline Units parse_units(const std::string& text) {
  if (text == "bits") return Units::Bits;
  if (text == "nats") return Units::Nats;
  throw InvalidArgument("unknown units '" + text + "' (bits|nats)");
}

inline std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::Histogram: return "Histogram";
    case EstimatorKind::Mine: return "Mine";
    case EstimatorKind::MineEmbedding: return "MineEmbedding";
  }
  return "?";
}

inline double nats_to(Units units, double nats) {
  return units == Units::Nats ? nats : nats / std::numbers::ln2;
}

struct MIEstimate {
  double value = 0.0;
  Units units = Units::Bits;
  EstimatorKind estimator = EstimatorKind::Histogram;
  std::size_t sample_count = 0;
};

class JointHistogram {
 public:
  JointHistogram(std::size_t bins_a, std::size_t bins_b)
      : bins_a_(bins_a), bins_b_(bins_b), counts_(bins_a * bins_b, 0) {
    if (bins_a == 0 || bins_b == 0) throw InvalidArgument("histogram needs at least one bin per axis");
  }

  std::size_t bins_a() const noexcept { return bins_a_; }
  std::size_t bins_b() const noexcept { return bins_b_; }
  std::uint64_t total() const noexcept { return total_; }

  std::uint64_t count(std::size_t u, std::size_t v) const { return counts_[u * bins_b_ + v]; }

  void add(std::size_t u, std::size_t v, std::uint64_t n = 1) {
    counts_[u * bins_b_ + v] += n;
    total_ += n;
  }

  std::vector<std::uint64_t> marginal_a() const {
    std::vector<std::uint64_t> m(bins_a_, 0);
    for (std::size_t u = 0; u < bins_a_; ++u)
      for (std::size_t v = 0; v < bins_b_; ++v) m[u] += count(u, v);
    return m;
  }

  std::vector<std::uint64_t> marginal_b() const {
    std::vector<std::uint64_t> m(bins_b_, 0);
    for (std::size_t u = 0; u < bins_a_; ++u)
      for (std::size_t v = 0; v < bins_b_; ++v) m[v] += count(u, v);
    return m;
  }

  std::span<const std::uint64_t> cells() const noexcept { return counts_; }

 private:
  std::size_t bins_a_;
  std::size_t bins_b_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Values are bin indices: each a_t must lie in [0, bins_a), each b_t in [0, bins_b).
template <std::integral T, std::integral U>
JointHistogram build_joint_histogram(std::span<const T> a, std::span<const U> b,
                                     std::size_t bins_a, std::size_t bins_b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("sequence lengths differ: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw InvalidArgument("cannot build a histogram from empty sequences");
  JointHistogram hist(bins_a, bins_b);
  for (std::size_t t = 0; t < a.size(); ++t) {
    const auto u = static_cast<long long>(a[t]);
    const auto v = static_cast<long long>(b[t]);
    if (u < 0 || static_cast<std::size_t>(u) >= bins_a || v < 0 ||
        static_cast<std::size_t>(v) >= bins_b) {
      throw InvalidArgument("value outside bin range at index " + std::to_string(t));
    }
    hist.add(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return hist;
}

inline constexpr std::size_t kMaxObservedCells = std::size_t{1} << 26;

// Bins span the observed integer range of each side.
template <std::integral T>
JointHistogram build_joint_histogram_observed(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw InvalidArgument("sequence lengths differ");
  if (a.empty()) throw InvalidArgument("cannot build a histogram from empty sequences");
  const auto [amin, amax] = std::ranges::minmax(a);
  const auto [bmin, bmax] = std::ranges::minmax(b);
  const auto span_a = static_cast<double>(amax - amin) + 1.0;
  const auto span_b = static_cast<double>(bmax - bmin) + 1.0;
  if (span_a * span_b > static_cast<double>(kMaxObservedCells)) {
    throw InvalidArgument("observed value range too wide for a dense histogram (" +
                          std::to_string(static_cast<long long>(span_a)) + " x " +
                          std::to_string(static_cast<long long>(span_b)) + " bins)");
  }
  JointHistogram hist(static_cast<std::size_t>(amax - amin) + 1,
                      static_cast<std::size_t>(bmax - bmin) + 1);
  for (std::size_t t = 0; t < a.size(); ++t) {
    hist.add(static_cast<std::size_t>(a[t] - amin), static_cast<std::size_t>(b[t] - bmin));
  }
  return hist;
}

// Shannon entropy in bits of a count table; empty cells contribute nothing.
inline double entropy(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw InvalidArgument("entropy of an empty table");
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

inline double joint_entropy(const JointHistogram& hist) { return entropy(hist.cells()); }

inline MIEstimate mutual_information_plugin(const JointHistogram& hist, Units units = Units::Bits) {
  if (hist.total() == 0) throw InvalidArgument("mutual information of an empty histogram");
  const auto pa = hist.marginal_a();
  const auto pb = hist.marginal_b();
  const double n = static_cast<double>(hist.total());
  double mi = 0.0;
  for (std::size_t u = 0; u < hist.bins_a(); ++u) {
    if (pa[u] == 0) continue;
    for (std::size_t v = 0; v < hist.bins_b(); ++v) {
      const auto c = hist.count(u, v);
      if (c == 0) continue;
      const double ratio = static_cast<double>(c) * n /
                           (static_cast<double>(pa[u]) * static_cast<double>(pb[v]));
      mi += static_cast<double>(c) / n * std::log2(ratio);
    }
  }
  // Rounding can leave tiny negatives on independent tables.
  mi = std::max(mi, 0.0);
  if (units == Units::Nats) mi *= std::numbers::ln2;
  return {mi, units, EstimatorKind::Histogram, static_cast<std::size_t>(hist.total())};
}

inline JointHistogram pixel_histogram(const ImagePlane& a, const ImagePlane& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw InvalidArgument("planes differ in size");
  }
  return build_joint_histogram(a.pixels(), b.pixels(), 256, 256);
}

// log2 of the clear-part alphabet size: bits_per_pixel - s.
inline double theoretic_upper_bound(int bits, int bits_per_pixel = 8) {
  if (bits < 0 || bits > bits_per_pixel) {
    throw InvalidArgument("encrypted bit count must be in [0, " + std::to_string(bits_per_pixel) + "]");
  }
  return static_cast<double>(bits_per_pixel - bits);
}

inline constexpr std::size_t kMinCurveArea = 4096;

struct CurvePoint {
  int bits = 0;
  MIEstimate mi;
  double upper_bound = 0.0;
};

inline CurvePoint pixel_mi_point(const ImagePlane& img, const EncryptionParams& params) {
  const auto clear = extract_clear(encrypt(img, params), params);
  return {params.bits, mutual_information_plugin(pixel_histogram(img, clear)),
          theoretic_upper_bound(params.bits)};
}

inline std::vector<CurvePoint> pixel_mi_curve(const ImagePlane& img, std::uint64_t seed,
                                              ShiftMode mode = ShiftMode::MaskedLow,
                                              int min_bits = 0, int max_bits = 8) {
  if (img.area() < kMinCurveArea) {
    throw InvalidArgument("image area " + std::to_string(img.area()) +
                          " is below the minimum of " + std::to_string(kMinCurveArea) +
                          " pixels for a histogram curve");
  }
  std::vector<CurvePoint> curve;
  for (int s = min_bits; s <= max_bits; ++s) {
    curve.push_back(pixel_mi_point(img, EncryptionParams{s, seed, mode}));
  }
  return curve;
}

// round(v * scale) half away from zero, component-wise.
template <std::ranges::input_range Vectors>
std::vector<std::vector<long>> discretize_round(const Vectors& vectors, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("rounding scale must be positive");
  std::vector<std::vector<long>> out;
  for (const auto& vec : vectors) {
    std::vector<long> q;
    q.reserve(std::ranges::size(vec));
    for (const auto component : vec) {
      const double x = static_cast<double>(component);
      if (!std::isfinite(x)) throw InvalidArgument("non-finite embedding component");
      q.push_back(std::lround(x * scale));
    }
    out.push_back(std::move(q));
  }
  return out;
}

// Pools every (vector, component) pair of both sides into one scalar
// sequence per side, then runs the plug-in estimator over the observed range.
inline MIEstimate pooled_rounded_mi(const std::vector<std::vector<long>>& a,
                                    const std::vector<std::vector<long>>& b,
                                    Units units = Units::Bits) {
  if (a.size() != b.size()) throw InvalidArgument("vector counts differ");
  std::vector<long> flat_a, flat_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw InvalidArgument("vector dimensions differ");
    flat_a.insert(flat_a.end(), a[i].begin(), a[i].end());
    flat_b.insert(flat_b.end(), b[i].begin(), b[i].end());
  }
  return mutual_information_plugin(
      build_joint_histogram_observed(std::span<const long>(flat_a), std::span<const long>(flat_b)),
      units);
}

}  // namespace leakscope
