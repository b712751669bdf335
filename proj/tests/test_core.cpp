#include <gtest/gtest.h>

#include <set>

#include "skelmae/core.hpp"

using namespace skelmae;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiverge) {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  double s = 0.0, s2 = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Rng, BelowStaysInRange) {
  Rng r(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_EQ(r.below(1), 0u);
  EXPECT_EQ(r.below(0), 0u);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  Rng r(11);
  for (int k = 0; k <= 16; ++k) {
    const auto s = r.sample_without_replacement(16, k);
    ASSERT_EQ(static_cast<int>(s.size()), k);
    std::set<int> u(s.begin(), s.end());
    EXPECT_EQ(static_cast<int>(u.size()), k);
    for (int v : s) {
      EXPECT_GE(v, 0);
      EXPECT_LT(v, 16);
    }
  }
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(13);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(DeriveSeed, StreamsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
}

TEST(Digest, KnownFnvVectors) {
  // FNV-1a 64 of the empty input and of "a".
  EXPECT_EQ(Digest{}.hex(), "cbf29ce484222325");
  EXPECT_EQ(Digest{}.bytes("a", 1).hex(), "af63dc4c8601ec8c");
}

TEST(Digest, LengthPrefixSeparatesStrings) {
  EXPECT_NE(Digest{}.str("ab").str("c").hex(), Digest{}.str("a").str("bc").hex());
  EXPECT_EQ(digest_of("x"), digest_of("x"));
}

TEST(Error, CarriesCode) {
  try {
    require(false, ErrorCode::format_error, "bad");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format_error);
    EXPECT_STREQ(e.what(), "bad");
    EXPECT_STREQ(to_string(e.code()), "format_error");
  }
  EXPECT_NO_THROW(require(true, ErrorCode::io_error, "unused"));
}
