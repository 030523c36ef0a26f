#include "fuit/fuzzy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace fuit {

FuzzySet::FuzzySet(double p, double q, double r) : p_(p), q_(q), r_(r) {
  if (!(std::isfinite(p) && std::isfinite(q) && std::isfinite(r))) {
    throw InvalidParameter("fuzzy set parameters must be finite");
  }
  if (!(p <= q && q <= r) || !(p < r)) {
    throw InvalidParameter("fuzzy set requires p <= q <= r and p < r");
  }
}

double FuzzySet::membership(double x) const {
  if (x <= q_) {
    if (left_shoulder()) return 1.0;
    if (x <= p_) return 0.0;
    return (x - p_) / (q_ - p_);
  }
  if (right_shoulder()) return 1.0;
  if (x >= r_) return 0.0;
  return (r_ - x) / (r_ - q_);
}

double triangular_membership(double x, const FuzzySet& set) { return set.membership(x); }

FuzzyPartition::FuzzyPartition(std::vector<FuzzySet> sets, double domain_lo, double domain_hi)
    : sets_(std::move(sets)), lo_(domain_lo), hi_(domain_hi) {
  if (!(domain_lo < domain_hi)) throw InvalidParameter("partition domain must satisfy lo < hi");
  if (sets_.size() < 2) throw InvalidParameter("partition needs at least 2 fuzzy sets");
  for (std::size_t i = 1; i < sets_.size(); ++i) {
    if (!(sets_[i - 1].q() < sets_[i].q())) {
      throw InvalidParameter("fuzzy set peaks must be strictly increasing");
    }
  }

  // Coverage: the open supports (shoulders extend to infinity) must cover
  // the closed domain.
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto left = [&](const FuzzySet& s) { return s.left_shoulder() ? -inf : s.p(); };
  auto right = [&](const FuzzySet& s) { return s.right_shoulder() ? inf : s.r(); };
  double cursor = lo_;
  while (cursor <= hi_) {
    double reach = -inf;
    for (const auto& s : sets_) {
      if (left(s) < cursor && right(s) > cursor) reach = std::max(reach, right(s));
    }
    if (reach == -inf) {
      throw InvalidParameter("fuzzy partition leaves x=" + std::to_string(cursor) +
                             " with zero membership");
    }
    cursor = reach;
  }
}

MembershipRecord FuzzyPartition::classify(double x) const {
  MembershipRecord best{1, sets_[0].membership(x)};
  for (std::size_t i = 1; i < sets_.size(); ++i) {
    double mu = sets_[i].membership(x);
    if (mu > best.mu) best = {static_cast<int>(i) + 1, mu};
  }
  return best;
}

FuzzyPartition build_uniform_partition(int r, double domain_lo, double domain_hi) {
  if (r < 2) throw InvalidParameter("number of fuzzy sets must be >= 2, got " + std::to_string(r));
  if (!(domain_lo < domain_hi)) throw InvalidParameter("partition domain must satisfy lo < hi");

  const double spacing = (domain_hi - domain_lo) / r;
  std::vector<double> peaks(static_cast<std::size_t>(r));
  for (int k = 1; k <= r; ++k) peaks[k - 1] = domain_lo + (k - 0.5) * spacing;

  std::vector<FuzzySet> sets;
  sets.reserve(peaks.size());
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    double p = k == 0 ? peaks[k] : peaks[k - 1];
    double q = peaks[k];
    double rr = k + 1 == peaks.size() ? peaks[k] : peaks[k + 1];
    sets.emplace_back(p, q, rr);
  }
  return FuzzyPartition(std::move(sets), domain_lo, domain_hi);
}

MembershipRecord fuit_pixel(const FuzzyPartition& partition, int pixel) {
  if (pixel < 0 || pixel > 255) {
    throw InvalidParameter("pixel value " + std::to_string(pixel) + " outside [0, 255]");
  }
  return partition.classify(static_cast<double>(pixel));
}

MembershipRecord fuit_value(const FuzzyPartition& partition, double value) {
  return partition.classify(value);
}

IndexImage fuit_image(const FuzzyPartition& partition, const ImageU8& img) {
  // Pixel values are 8-bit, so one lookup table per call covers the image.
  std::array<int, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[v] = partition.classify(v).index;

  IndexImage out{img.rows, img.cols, std::vector<int>(img.size()),
                 static_cast<int>(partition.size())};
  for (std::size_t i = 0; i < img.size(); ++i) out.indices[i] = lut[img.pixels[i]];
  return out;
}

int discretize_levels(int width) {
  if (width < 1 || width > 255) {
    throw InvalidParameter("discretization width L must be in [1, 255], got " +
                           std::to_string(width));
  }
  return 255 / width + 1;
}

int discretize_value(double value, int width) {
  int levels = discretize_levels(width);
  int bin = static_cast<int>(std::floor(value / width));
  return std::clamp(bin + 1, 1, levels);
}

IndexImage hard_discretize(const ImageU8& img, int width) {
  IndexImage out{img.rows, img.cols, std::vector<int>(img.size()), discretize_levels(width)};
  for (std::size_t i = 0; i < img.size(); ++i) out.indices[i] = img.pixels[i] / width + 1;
  return out;
}

namespace {
template <typename Range>
UniqueValues count_unique(const Range& values) {
  UniqueValues out;
  out.values.assign(values.begin(), values.end());
  std::sort(out.values.begin(), out.values.end());
  out.values.erase(std::unique(out.values.begin(), out.values.end()), out.values.end());
  out.count = out.values.size();
  return out;
}
}  // namespace

UniqueValues unique_value_count(const IndexImage& img) { return count_unique(img.indices); }
UniqueValues unique_value_count(const ImageU8& img) { return count_unique(img.pixels); }

}  // namespace fuit
