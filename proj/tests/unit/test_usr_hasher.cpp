#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace usrlsh;
using testutil::DenseW;

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace

TEST(ComputeAlpha, Examples) {
    EXPECT_EQ(compute_alpha(16, 1.0), 2.0);
    EXPECT_EQ(compute_alpha(4, 2.0), 0.5);
}

TEST(ComputeAlpha, NormalizedDataGivesHalfRootCodeDim) {
    Dataset xs = normalize_angular(gen_synthetic(2000, 96, 32, 1));
    double sum = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double sq = 0;
        for (float v : xs.row(i)) sq += double(v) * v;
        sum += std::sqrt(sq);
    }
    const double alpha = compute_alpha(768, sum / static_cast<double>(xs.size()));
    EXPECT_NEAR(alpha, std::sqrt(768.0) / 2.0, 1e-5);
    EXPECT_NEAR(alpha, 13.856, 1e-3);
}

TEST(ComputeAlpha, DegenerateMeanNorm) {
    EXPECT_THROW(compute_alpha(8, 0.0), DegenerateDatasetError);
    EXPECT_THROW(compute_alpha(8, -1.0), DegenerateDatasetError);
    EXPECT_THROW(compute_alpha(8, std::nan("")), DegenerateDatasetError);
}

TEST(HashValue, ZeroIsFixedPoint) {
    const auto p = build_projection(12, 3, 4);
    const std::vector<float> x(12, 0.0f);
    const HasherConfig cfg{12, 3, 17, 2.5};
    for (double v : hash_value(x, p, cfg)) EXPECT_EQ(v, 0.0);
    for (int s : unpack_bits(hash_code(x, p, cfg))) EXPECT_EQ(s, 1);
}

TEST(HashValue, SingleIterationIsTanhOfDrive) {
    std::mt19937_64 gen(3);
    const auto p = build_projection(10, 4, 8);
    const DenseW w(p);
    for (int rep = 0; rep < 10; ++rep) {
        const auto x = testutil::random_floats(gen, 10, 2.0);
        const double alpha = 0.7;
        const auto y = hash_value(x, p, HasherConfig{10, 4, 1, alpha});
        const auto wx = w.encode(std::vector<double>(x.begin(), x.end()));
        for (std::size_t j = 0; j < y.size(); ++j) EXPECT_NEAR(y[j], std::tanh(alpha * wx[j]), 1e-12);
    }
}

TEST(HashValue, SingleRotationIsFixedAfterFirstStep) {
    const StackedProjection p({testutil::identity_rotation(1)});
    const std::vector<float> x{0.5f};
    const auto y1 = hash_value(x, p, HasherConfig{1, 1, 1, 1.0});
    const auto y3 = hash_value(x, p, HasherConfig{1, 1, 3, 1.0});
    EXPECT_NEAR(y1[0], 0.4621, 1e-4);
    EXPECT_NEAR(y3[0], y1[0], 1e-12);
}

TEST(HashValue, IdentityRotationPreservesSigns) {
    const StackedProjection p({testutil::identity_rotation(2)});
    const std::vector<float> x{0.3f, -0.7f};
    EXPECT_EQ(unpack_bits(hash_code(x, p, HasherConfig{2, 1, 17, 1.0})), (std::vector<int>{1, -1}));
}

TEST(HashValue, MatchesExplicitResidualMatrixOracle) {
    std::mt19937_64 gen(4);
    for (auto [d, m] : {std::pair{6, 2}, {5, 4}, {16, 3}}) {
        const auto p = build_projection(d, m, 21);
        const DenseW w(p);
        for (std::size_t T : {1u, 2u, 17u}) {
            const auto x = testutil::random_floats(gen, d, 1.5);
            const auto got = hash_value(x, p, HasherConfig{std::size_t(d), std::size_t(m), T, 1.3});
            const auto want = w.iterate(x, 1.3, T);
            for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-9);
        }
    }
}

TEST(HashValue, RangeAndDeterminism) {
    std::mt19937_64 gen(6);
    const auto p = build_projection(20, 2, 1);
    const HasherConfig cfg{20, 2, 17, 5.0};
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = testutil::random_floats(gen, 20, 100.0);
        const auto y = hash_value(x, p, cfg);
        for (double v : y) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(y, hash_value(x, build_projection(20, 2, 1), cfg));
    }
}

TEST(HashValue, FirstStepScaleCovariance) {
    std::mt19937_64 gen(7);
    const auto p = build_projection(9, 2, 2);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = testutil::random_floats(gen, 9);
        std::vector<float> cx(x);
        for (float& v : cx) v *= 4.0f;  // exact in binary floating point
        EXPECT_EQ(hash_code(cx, p, HasherConfig{9, 2, 1, 0.25}), hash_code(x, p, HasherConfig{9, 2, 1, 1.0}));
    }
}

TEST(HashValue, CodeIsSignOfValues) {
    std::mt19937_64 gen(9);
    const auto p = build_projection(7, 3, 5);
    const HasherConfig cfg{7, 3, 17, 1.0};
    const auto x = testutil::random_floats(gen, 7);
    const auto y = hash_value(x, p, cfg);
    const auto code = hash_code(x, p, cfg);
    for (std::size_t j = 0; j < y.size(); ++j) EXPECT_EQ(code.bit(j), y[j] >= 0.0);
}

TEST(HashValue, Errors) {
    const auto p = build_projection(4, 2, 0);
    EXPECT_THROW(hash_value(std::vector<float>(3), p, HasherConfig{4, 2, 17, 1.0}), DimensionError);
    std::vector<float> bad(4, 0.0f);
    bad[2] = std::nanf("");
    EXPECT_THROW(hash_value(bad, p, HasherConfig{4, 2, 17, 1.0}), InvalidArgumentError);
    EXPECT_THROW(hash_value(std::vector<float>(4), p, HasherConfig{4, 2, 0, 1.0}), ConfigError);
    EXPECT_THROW(hash_value(std::vector<float>(4), p, HasherConfig{4, 2, 17, 0.0}), ConfigError);
    EXPECT_THROW(hash_value(std::vector<float>(4), p, HasherConfig{4, 3, 17, 1.0}), ConfigError);
}

TEST(BatchHash, EmptyAndSingle) {
    const auto p = build_projection(5, 2, 3);
    const HasherConfig cfg{5, 2, 17, 1.0};
    EXPECT_TRUE(batch_hash(std::vector<DenseVector>{}, p, cfg).empty());
    const DenseVector x{0.1f, -0.2f, 0.3f, 0.4f, -0.5f};
    const auto codes = batch_hash(std::vector<DenseVector>{x}, p, cfg);
    ASSERT_EQ(codes.size(), 1u);
    EXPECT_EQ(codes[0], hash_code(x, p, cfg));
}

TEST(BatchHash, MatchesSinglePointCalls) {
    const auto p = build_projection(24, 4, 11);
    const HasherConfig cfg{24, 4, 17, 0.9};
    const Dataset xs = testutil::random_dataset(100, 24, 12);
    const auto codes = batch_hash(xs, p, cfg);
    ASSERT_EQ(codes.size(), 100u);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_EQ(codes[i], hash_code(xs.row(i), p, cfg)) << i;
        std::vector<double> batch_values(24 * 4);
        hash_values_batch(xs.row(i), 1, p, cfg, batch_values);
        EXPECT_EQ(batch_values, hash_value(xs.row(i), p, cfg));
    }
}

TEST(BatchHash, ErrorNamesTheBadIndex) {
    const auto p = build_projection(3, 1, 0);
    const HasherConfig cfg{3, 1, 17, 1.0};
    std::vector<DenseVector> xs{{1, 2, 3}, {1, 2}, {1, 2, 3}};
    try {
        batch_hash(xs, p, cfg);
        FAIL();
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
    }
    xs[1] = {1, std::numeric_limits<float>::infinity(), 3};
    try {
        batch_hash(xs, p, cfg);
        FAIL();
    } catch (const InvalidArgumentError& e) {
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
    }
}

TEST(HashQuality, HammingTracksEuclideanBetterThanSimhash) {
    const std::size_t d = 16, m = 8;
    const Dataset xs = gen_synthetic(SyntheticSpec{400, d, 8, 5});
    double norm_sum = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) norm_sum += euclidean_norm(xs.row(i));
    const double alpha = compute_alpha(m * d, norm_sum / static_cast<double>(xs.size()));
    const auto p = build_projection(d, m, 3);
    const auto usr = batch_hash(xs, p, HasherConfig{d, m, 17, alpha});
    const GaussianProjection g(m * d, d, 3);
    std::vector<BinaryCode> sim;
    for (std::size_t i = 0; i < xs.size(); ++i) sim.push_back(simhash_code(xs.row(i), g));

    std::mt19937_64 gen(1);
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    std::vector<double> true_d, usr_d, sim_d;
    for (int t = 0; t < 2000; ++t) {
        const std::size_t a = pick(gen), b = pick(gen);
        if (a == b) continue;
        true_d.push_back(euclidean_distance(xs.row(a), xs.row(b)));
        usr_d.push_back(static_cast<double>(hamming(usr[a], usr[b])));
        sim_d.push_back(static_cast<double>(hamming(sim[a], sim[b])));
    }
    const double rho_usr = spearman(usr_d, true_d);
    const double rho_sim = spearman(sim_d, true_d);
    EXPECT_GT(rho_usr, rho_sim) << "usr " << rho_usr << " simhash " << rho_sim;
}
