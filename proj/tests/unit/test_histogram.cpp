#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "leakscope/histogram.hpp"
#include "oracles.hpp"

using namespace leakscope;

TEST(Entropy, SkewedPair) {
  const std::vector<std::uint64_t> counts{3, 1};
  EXPECT_NEAR(entropy(counts), 0.811278, 1e-6);
}

TEST(Entropy, IgnoresEmptyBinsAndRejectsEmptyInput) {
  const std::vector<std::uint64_t> counts{0, 4, 0, 4};
  EXPECT_DOUBLE_EQ(entropy(counts), 1.0);
}

TEST(JointHistogram, RejectsMismatchedAndOutOfRange) {
  const std::vector<int> a{0, 1, 2};
  const std::vector<int> b{0, 1};
  EXPECT_THROW((build_joint_histogram<int, int>(a, b, 4, 4)), InvalidArgument);
  const std::vector<int> c{0, 1, 4};
  EXPECT_THROW((build_joint_histogram<int, int>(a, c, 4, 4)), InvalidArgument);
  const std::vector<int> empty;
  EXPECT_THROW((build_joint_histogram<int, int>(empty, empty, 4, 4)), InvalidArgument);
}

TEST(PluginMI, IdentityEqualsEntropy) {
  Rng rng(1);
  std::vector<int> a(5000);
  for (auto& v : a) v = static_cast<int>(uniform_index(rng, 16));
  const auto hist = build_joint_histogram<int, int>(a, a, 16, 16);
  EXPECT_NEAR(mutual_information_plugin(hist).value, entropy(hist.marginal_a()), 1e-12);
}

TEST(PluginMI, SymmetricAndNonnegative) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(300), b(300);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int>(uniform_index(rng, 8));
      b[i] = uniform_index(rng, 3) == 0 ? a[i] : static_cast<int>(uniform_index(rng, 8));
    }
    const double ab = mutual_information_plugin(build_joint_histogram<int, int>(a, b, 8, 8)).value;
    const double ba = mutual_information_plugin(build_joint_histogram<int, int>(b, a, 8, 8)).value;
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
  }
}

TEST(PluginMI, MatchesBruteForceKl) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto na = 2 + uniform_index(rng, 15);
    const auto nb = 2 + uniform_index(rng, 15);
    std::vector<int> a(1000), b(1000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int>(uniform_index(rng, na));
      b[i] = static_cast<int>((a[i] + uniform_index(rng, 3)) % nb);
    }
    const auto est = mutual_information_plugin(build_joint_histogram<int, int>(a, b, na, nb));
    EXPECT_NEAR(est.value, oracle::brute_force_mi_bits(a, b), 1e-9);
  }
}

TEST(PluginMI, UnitsConvert) {
  std::vector<int> a{0, 1, 0, 1};
  const auto hist = build_joint_histogram<int, int>(a, a, 2, 2);
  EXPECT_NEAR(mutual_information_plugin(hist, Units::Bits).value, 1.0, 1e-12);
  EXPECT_NEAR(mutual_information_plugin(hist, Units::Nats).value, std::log(2.0), 1e-12);
}

TEST(PixelCurve, BoundedAndZeroAtFullEncryption) {
  const auto img = oracle::random_plane(64, 64, 9);
  const auto curve = pixel_mi_curve(img, 5);
  ASSERT_EQ(curve.size(), 9u);
  for (const auto& p : curve) {
    EXPECT_LE(p.mi.value, p.upper_bound + 1e-9) << "s=" << p.bits;
    EXPECT_DOUBLE_EQ(p.upper_bound, 8.0 - p.bits);
  }
  EXPECT_DOUBLE_EQ(curve.back().mi.value, 0.0);
}

TEST(PixelCurve, ClearConventionsAgree) {
  // Both clear-part layouts are bijections of the same low bits.
  const auto img = oracle::random_plane(64, 64, 10);
  const auto masked = pixel_mi_curve(img, 5, ShiftMode::MaskedLow);
  const auto shifted = pixel_mi_curve(img, 5, ShiftMode::ShiftedHigh);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    EXPECT_NEAR(masked[i].mi.value, shifted[i].mi.value, 1e-12);
  }
}

TEST(PixelCurve, RejectsSmallImages) {
  const ImagePlane img(63, 64);
  try {
    pixel_mi_curve(img, 1);
    FAIL() << "expected an exception";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("4032"), std::string::npos);
  }
}

TEST(Rounding, HalfAwayFromZero) {
  const std::vector<std::vector<double>> v{{0.24, -0.26, 0.25, -0.05}};
  const auto q = discretize_round(v, 10.0);
  EXPECT_EQ(q[0], (std::vector<long>{2, -3, 3, -1}));
  EXPECT_THROW(discretize_round(v, 0.0), InvalidArgument);
}

TEST(Rounding, PooledMiOfIdenticalSides) {
  const std::vector<std::vector<long>> a{{0, 1}, {2, 3}};
  EXPECT_NEAR(pooled_rounded_mi(a, a).value, 2.0, 1e-12);
  const std::vector<std::vector<long>> b{{5, 5}, {5, 5}};
  EXPECT_DOUBLE_EQ(pooled_rounded_mi(a, b).value, 0.0);
}

TEST(Rounding, RejectsHugeObservedRange) {
  const std::vector<std::vector<long>> a{{0, 100000}};
  const std::vector<std::vector<long>> b{{0, 100000}};
  EXPECT_THROW(pooled_rounded_mi(a, b), InvalidArgument);
}
