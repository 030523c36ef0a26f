#pragma once

#include <span>
#include <vector>

#include "fuit/image.hpp"

namespace fuit {

/// Triangular fuzzy set with feet p, r and peak q, all in pixel units.
///
/// A set with p == q is a left shoulder (membership 1 for every x <= q) and a
/// set with q == r is a right shoulder (membership 1 for every x >= q). Only
/// the first and last set of a partition are expected to use shoulders.
class FuzzySet {
 public:
  FuzzySet(double p, double q, double r);

  double p() const { return p_; }
  double q() const { return q_; }
  double r() const { return r_; }
  bool left_shoulder() const { return p_ == q_; }
  bool right_shoulder() const { return q_ == r_; }

  double membership(double x) const;

 private:
  double p_;
  double q_;
  double r_;
};

/// Triangular membership function: 0 outside (p, r), linear ramps up to the
/// peak q and back down. Shoulders skip the zero-width ramp.
double triangular_membership(double x, const FuzzySet& set);

struct MembershipRecord {
  int index = 0;  // 1-based set index
  double mu = 0.0;
};

/// Ordered collection of fuzzy sets covering [domain_lo, domain_hi].
class FuzzyPartition {
 public:
  /// Validates ordering (strictly increasing peaks) and full coverage of the
  /// domain; throws InvalidParameter otherwise.
  FuzzyPartition(std::vector<FuzzySet> sets, double domain_lo = 0.0, double domain_hi = 255.0);

  std::size_t size() const { return sets_.size(); }
  const FuzzySet& operator[](std::size_t i) const { return sets_[i]; }
  std::span<const FuzzySet> sets() const { return sets_; }
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }

  /// Set with the largest membership for x; ties go to the lowest index.
  MembershipRecord classify(double x) const;

 private:
  std::vector<FuzzySet> sets_;
  double lo_;
  double hi_;
};

/// R triangles with evenly spaced peaks lo + (k - 0.5) * (hi - lo) / R whose
/// feet sit on the neighbouring peaks (50% overlap). The first and last sets
/// are shoulders so the domain edges have full membership.
FuzzyPartition build_uniform_partition(int r, double domain_lo = 0.0, double domain_hi = 255.0);

inline constexpr int kDefaultFuzzySets = 12;
inline constexpr int kDefaultDiscretizeWidth = 32;

MembershipRecord fuit_pixel(const FuzzyPartition& partition, int pixel);

/// Same as fuit_pixel for a continuous pixel-scale value (used on attacked images).
MembershipRecord fuit_value(const FuzzyPartition& partition, double value);

IndexImage fuit_image(const FuzzyPartition& partition, const ImageU8& img);

/// Hard discretization baseline: index = floor(pixel / width) + 1.
IndexImage hard_discretize(const ImageU8& img, int width);
int discretize_value(double value, int width);
int discretize_levels(int width);

struct UniqueValues {
  std::vector<int> values;  // sorted ascending
  std::size_t count = 0;
};

UniqueValues unique_value_count(const IndexImage& img);
UniqueValues unique_value_count(const ImageU8& img);

}  // namespace fuit
