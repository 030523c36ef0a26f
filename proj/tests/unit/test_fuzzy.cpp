#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fuit/fuzzy.hpp"
#include "fuit/rng.hpp"

using namespace fuit;

namespace {

const std::vector<std::uint8_t> kClean{78, 61, 120, 236, 222, 40, 10, 11, 15};
const std::vector<std::uint8_t> kAdversarial{81, 63, 123, 241, 222, 40, 17, 15, 17};
const std::vector<int> kExpected{4, 3, 6, 12, 11, 2, 1, 1, 1};

// Independent oracle: evaluate every set of the uniform partition and keep
// the first maximum.
int brute_force_argmax(int r, double x) {
  const double w = 255.0 / r;
  int best = 0;
  double best_mu = -1.0;
  for (int k = 1; k <= r; ++k) {
    const double q = (k - 0.5) * w;
    double mu;
    if (k == 1 && x <= q) {
      mu = 1.0;
    } else if (k == r && x >= q) {
      mu = 1.0;
    } else {
      mu = std::max(0.0, 1.0 - std::abs(x - q) / w);
    }
    if (mu > best_mu) {
      best_mu = mu;
      best = k;
    }
  }
  return best;
}

int nearest_peak(int r, double x) {
  const double w = 255.0 / r;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= r; ++k) {
    double d = std::abs(x - (k - 0.5) * w);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("membership of a triangle") {
  FuzzySet s(0.0, 12.5, 25.0);
  CHECK(s.membership(12.5) == 1.0);
  CHECK(s.membership(0.0) == 0.0);
  CHECK(s.membership(-3.0) == 0.0);
  CHECK(s.membership(25.0) == 0.0);
  CHECK(s.membership(40.0) == 0.0);
  CHECK(s.membership(6.25) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.membership(10.0) == doctest::Approx(0.80).epsilon(1e-12));
  CHECK(triangular_membership(10.0, s) == s.membership(10.0));
}

TEST_CASE("shoulders keep full membership past the peak") {
  FuzzySet left(0.0, 0.0, 10.0);
  CHECK(left.left_shoulder());
  CHECK(left.membership(0.0) == 1.0);
  CHECK(left.membership(-5.0) == 1.0);
  CHECK(left.membership(5.0) == doctest::Approx(0.5));
  FuzzySet right(245.0, 255.0, 255.0);
  CHECK(right.right_shoulder());
  CHECK(right.membership(300.0) == 1.0);
}

TEST_CASE("fuzzy set rejects bad feet") {
  CHECK_THROWS_AS(FuzzySet(5.0, 4.0, 6.0), InvalidParameter);
  CHECK_THROWS_AS(FuzzySet(1.0, 1.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(FuzzySet(0.0, std::nan(""), 1.0), InvalidParameter);
}

TEST_CASE("uniform partition peaks") {
  auto p12 = build_uniform_partition(12);
  REQUIRE(p12.size() == 12);
  CHECK(p12[0].q() == doctest::Approx(10.625));
  CHECK(p12[1].q() == doctest::Approx(31.875));
  CHECK(p12[11].q() == doctest::Approx(244.375));
  CHECK(p12[0].left_shoulder());
  CHECK(p12[11].right_shoulder());
  for (std::size_t k = 1; k + 1 < p12.size(); ++k) {
    CHECK(p12[k].p() == p12[k - 1].q());
    CHECK(p12[k].r() == p12[k + 1].q());
  }

  auto p2 = build_uniform_partition(2);
  CHECK(p2[0].q() == doctest::Approx(63.75));
  CHECK(p2[1].q() == doctest::Approx(191.25));
  CHECK(p2[0].membership(127.5) == doctest::Approx(p2[1].membership(127.5)));
  CHECK(p2.classify(127.5).index == 1);  // tie goes low
  CHECK(p2.classify(127.6).index == 2);
}

TEST_CASE("partition parameter errors") {
  CHECK_THROWS_AS(build_uniform_partition(1), InvalidParameter);
  CHECK_THROWS_AS(build_uniform_partition(12, 10.0, 10.0), InvalidParameter);
  CHECK_THROWS_AS(build_uniform_partition(12, 20.0, 10.0), InvalidParameter);
  // A gap between two sets leaves part of the domain uncovered.
  std::vector<FuzzySet> gap{FuzzySet(0, 0, 100), FuzzySet(150, 255, 255)};
  CHECK_THROWS_AS(FuzzyPartition{gap}, InvalidParameter);
}

TEST_CASE("worked example: clean and adversarial images map to the same indices") {
  auto part = build_uniform_partition(12);
  IndexImage a = fuit_image(part, ImageU8(3, 3, kClean));
  IndexImage b = fuit_image(part, ImageU8(3, 3, kAdversarial));
  CHECK(a.indices == kExpected);
  CHECK(b.indices == kExpected);
  CHECK(a.levels == 12);
  auto ua = unique_value_count(a), ub = unique_value_count(b);
  CHECK(ua.count == 7);
  CHECK(ua.values == std::vector<int>{1, 2, 3, 4, 6, 11, 12});
  CHECK(ub.values == ua.values);
  CHECK(fuit_pixel(part, 78).index == 4);
  CHECK(fuit_pixel(part, 81).index == 4);
  CHECK(fuit_pixel(part, 236).index == 12);
}

TEST_CASE("pixel at a peak has full membership") {
  auto part = build_uniform_partition(3, 0.0, 6.0);  // peaks 1, 3, 5
  for (int k = 1; k <= 3; ++k) {
    auto m = part.classify(2.0 * k - 1.0);
    CHECK(m.index == k);
    CHECK(m.mu == 1.0);
  }
}

TEST_CASE("constant images") {
  auto part = build_uniform_partition(12);
  ImageU8 img(4, 5, 200);
  auto out = fuit_image(part, img);
  CHECK(unique_value_count(out).count == 1);
  CHECK(unique_value_count(img).count == 1);
  for (int v : out.indices) CHECK(v == out.indices.front());
}

TEST_CASE("quantizer matches brute-force argmax and nearest peak") {
  for (int r = 2; r <= 64; ++r) {
    auto part = build_uniform_partition(r);
    int previous = 0;
    for (int x = 0; x <= 255; ++x) {
      const int got = fuit_pixel(part, x).index;
      REQUIRE(got == brute_force_argmax(r, x));
      REQUIRE(got == nearest_peak(r, x));
      REQUIRE(got >= previous);  // monotone
      previous = got;
    }
  }
}

TEST_CASE("continuous values agree with the oracle") {
  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const int r = 2 + static_cast<int>(rng.below(63));
    const double x = rng.uniform(0.0, 255.0);
    auto part = build_uniform_partition(r);
    CHECK(fuit_value(part, x).index == brute_force_argmax(r, x));
  }
}

TEST_CASE("perturbations inside a cell are absorbed") {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const int r = 2 + static_cast<int>(rng.below(30));
    const double w = 255.0 / r;
    auto part = build_uniform_partition(r);
    // Cell k spans (q_k - w/2, q_k + w/2).
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(r)));
    const double lo = (k - 1) * w, hi = k * w;
    const double x = rng.uniform(lo + 1e-6, hi - 1e-6), y = rng.uniform(lo + 1e-6, hi - 1e-6);
    CHECK(fuit_value(part, x).index == fuit_value(part, y).index);
  }
}

TEST_CASE("fuit_pixel rejects out-of-range pixels") {
  auto part = build_uniform_partition(12);
  CHECK_THROWS_AS(fuit_pixel(part, -1), InvalidParameter);
  CHECK_THROWS_AS(fuit_pixel(part, 256), InvalidParameter);
}

TEST_CASE("hard discretization") {
  ImageU8 img(1, 4, std::vector<std::uint8_t>{78, 255, 0, 31});
  auto out = hard_discretize(img, 32);
  CHECK(out.indices == std::vector<int>{3, 8, 1, 1});
  CHECK(out.levels == 8);
  CHECK(discretize_levels(32) == 8);
  CHECK(discretize_levels(1) == 256);
  CHECK(discretize_levels(255) == 2);
  CHECK_THROWS_AS(hard_discretize(img, 0), InvalidParameter);
  CHECK_THROWS_AS(discretize_levels(256), InvalidParameter);
}

TEST_CASE("quantizers are projections") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    ImageU8 img(4, 4);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));

    const int r = 2 + static_cast<int>(rng.below(40));
    auto part = build_uniform_partition(r);
    // Re-applying FUIT to the peak values of its own output changes nothing.
    auto once = fuit_image(part, img);
    for (std::size_t i = 0; i < once.size(); ++i) {
      const double peak = part[static_cast<std::size_t>(once.indices[i] - 1)].q();
      CHECK(fuit_value(part, peak).index == once.indices[i]);
    }

    const int l = 1 + static_cast<int>(rng.below(255));
    auto bins = hard_discretize(img, l);
    ImageU8 lower(4, 4);
    for (std::size_t i = 0; i < bins.size(); ++i) {
      lower.pixels[i] = static_cast<std::uint8_t>((bins.indices[i] - 1) * l);
    }
    CHECK(hard_discretize(lower, l) == bins);
  }
}

TEST_CASE("normalized index images lie in (0, 1]") {
  auto part = build_uniform_partition(12);
  ImageU8 img(1, 3, std::vector<std::uint8_t>{0, 128, 255});
  auto v = fuit_image(part, img).normalized();
  CHECK(v[0] == doctest::Approx(1.0 / 12));
  CHECK(v[2] == 1.0);
}

TEST_CASE("unit_to_pixel snaps near-integers") {
  CHECK(unit_to_pixel(32.0 / 255.0) == 32.0);
  CHECK(unit_to_pixel(1.0) == 255.0);
  CHECK(unit_to_pixel(0.5) == 127.5);
}
