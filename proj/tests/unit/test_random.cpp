#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "usrlsh/random.hpp"

using namespace usrlsh;

TEST(Random, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng c(42), e(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(c.normal(), e.normal());
}

TEST(Random, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Random, UniformAndBelowStayInRange) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        EXPECT_GT(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(rng.below(7), 7u);
    }
    EXPECT_EQ(rng.below(1), 0u);
}

TEST(Random, NormalMoments) {
    Rng rng(11);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(var, 1.0, 0.02);
}
