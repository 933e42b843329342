#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "support.hpp"

using namespace usrlsh;

namespace {

// Every subset of the first M coordinates, sorted by score with ties in a
// deterministic but arbitrary order; only the score sequence is compared.
std::vector<std::pair<double, std::uint64_t>> enumerate_subsets(const std::vector<double>& y, std::size_t M) {
    std::vector<std::pair<double, std::uint64_t>> all;
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << M); ++mask) {
        long double s = 0;
        for (std::size_t i = 0; i < M; ++i) {
            if (mask >> i & 1) s += std::fabs(y[i]);
        }
        all.emplace_back(static_cast<double>(s), mask);
    }
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<double> random_values(std::mt19937_64& gen, std::size_t n) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> y(n);
    for (double& v : y) v = u(gen);
    return y;
}

}  // namespace

TEST(BuildTable, Empty) {
    const auto bt = build_table(CodeTable(16), 8);
    EXPECT_EQ(bt.bucket_count(0), 0u);
    EXPECT_TRUE(bt.bucket(0, 0).empty());
}

TEST(BuildTable, IdenticalCodesShareBucket) {
    CodeTable t(16);
    const auto c = pack_bits(std::vector<int>(16, 1));
    t.add(4, c);
    t.add(9, c);
    const auto bt = build_table(t, 8);
    const auto ids = bt.bucket(0, 0xFF);
    EXPECT_EQ(std::multiset<PointId>(ids.begin(), ids.end()), (std::multiset<PointId>{4, 9}));
}

TEST(BuildTable, PartitionIsComplete) {
    std::mt19937_64 gen(1);
    CodeTable t(32);
    for (PointId id = 0; id < 1000; ++id) {
        BinaryCode c(32);
        for (std::size_t j = 0; j < 32; ++j) c.set(j, gen() & 1);
        t.add(id * 7, c);
    }
    const auto bt = build_table(t, 8);
    auto all = bt.all_ids(0);
    std::sort(all.begin(), all.end());
    std::vector<PointId> want(t.ids().begin(), t.ids().end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(all, want);
    for (std::size_t s = 0; s < t.size(); ++s) {
        const auto b = bt.bucket(0, code_prefix(t.code_bytes_at(s), 8));
        EXPECT_NE(std::find(b.begin(), b.end(), t.ids()[s]), b.end());
    }
}

TEST(BuildTable, KeyLongerThanCode) {
    EXPECT_THROW(build_table(CodeTable(8), 9), ConfigError);
    EXPECT_THROW(BucketTable(65, 1), ConfigError);
    EXPECT_THROW(BucketTable(8, 0), ConfigError);
}

TEST(ProbeSequence, FirstProbeIsUnperturbed) {
    const std::vector<double> y{0.3, -0.2};
    const auto s = probe_sequence(y, 2, 1);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_TRUE(s[0].flipped.empty());
    EXPECT_EQ(s[0].score, 0.0);
}

TEST(ProbeSequence, SmallExample) {
    const std::vector<double> y{0.9, -0.1, 0.5};
    const auto s = probe_sequence(y, 3, 3);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_TRUE(s[0].flipped.empty());
    EXPECT_EQ(s[1].flipped, std::vector<std::uint32_t>{1});
    EXPECT_EQ(s[2].flipped, std::vector<std::uint32_t>{2});
    EXPECT_EQ(s[1].score, 0.1);
    EXPECT_EQ(s[2].score, 0.5);
    const auto oracle = enumerate_subsets(y, 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s[i].mask(), oracle[i].second);
}

TEST(ProbeSequence, FullEnumerationMatchesSortedSubsets) {
    std::mt19937_64 gen(2);
    for (int rep = 0; rep < 20; ++rep) {
        const auto y = random_values(gen, 12);
        const auto s = probe_sequence(y, 8, 256);
        const auto oracle = enumerate_subsets(y, 8);
        ASSERT_EQ(s.size(), 256u);
        std::set<std::uint64_t> masks;
        for (std::size_t i = 0; i < 256; ++i) {
            masks.insert(s[i].mask());
            EXPECT_NEAR(s[i].score, oracle[i].first, 1e-12);
            if (i > 0) EXPECT_LE(s[i - 1].score, s[i].score);
            for (auto c : s[i].flipped) EXPECT_LT(c, 8u);
            EXPECT_TRUE(std::is_sorted(s[i].flipped.begin(), s[i].flipped.end()));
        }
        EXPECT_EQ(masks.size(), 256u);
    }
}

TEST(ProbeSequence, TruncatesAtAllSubsets) {
    const std::vector<double> y{0.1, 0.2, 0.3};
    EXPECT_EQ(probe_sequence(y, 3, 100).size(), 8u);
    EXPECT_EQ(probe_sequence(y, 0, 5).size(), 1u);
    EXPECT_THROW(probe_sequence(y, 4, 5), ConfigError);
    EXPECT_THROW(probe_sequence(y, 3, 0), InvalidArgumentError);
}

TEST(ProbeSequence, TiedMagnitudesStayUnique) {
    const std::vector<double> y(10, 0.25);
    const auto s = probe_sequence(y, 10, 1024);
    std::set<std::uint64_t> masks;
    for (std::size_t i = 0; i < s.size(); ++i) {
        masks.insert(s[i].mask());
        if (i > 0) EXPECT_LE(s[i - 1].score, s[i].score);
    }
    EXPECT_EQ(masks.size(), 1024u);
}

TEST(ProbeSequence, NonDecreasingOnLongKeys) {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto y = random_values(gen, 64);
        const auto s = probe_sequence(y, 64, 2000);
        ASSERT_EQ(s.size(), 2000u);
        for (std::size_t i = 1; i < s.size(); ++i) ASSERT_LE(s[i - 1].score, s[i].score);
    }
}

TEST(PerturbationScore, SingletonAndAdditivity) {
    std::mt19937_64 gen(4);
    const auto y = random_values(gen, 16);
    for (std::uint32_t i = 0; i < 16; ++i) EXPECT_EQ(perturbation_score(y, std::vector<std::uint32_t>{i}), std::fabs(y[i]));
    EXPECT_EQ(perturbation_score(y, std::vector<std::uint32_t>{}), 0.0);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<std::uint32_t> a, b;
        for (std::uint32_t i = 0; i < 16; ++i) {
            const auto r = gen() % 3;
            if (r == 0) a.push_back(i);
            if (r == 1) b.push_back(i);
        }
        std::vector<std::uint32_t> u(a);
        u.insert(u.end(), b.begin(), b.end());
        std::sort(u.begin(), u.end());
        EXPECT_NEAR(perturbation_score(y, u), perturbation_score(y, a) + perturbation_score(y, b), 1e-12);
    }
    EXPECT_THROW(perturbation_score(y, std::vector<std::uint32_t>{16}), InvalidArgumentError);
}

class ProbeQueryTest : public ::testing::Test {
protected:
    static constexpr std::size_t d = 16;
    static constexpr std::size_t m = 2;

    void SetUp() override {
        data = gen_synthetic(SyntheticSpec{3000, d, 16, 4});
        queries = gen_synthetic(SyntheticSpec{60, d, 16, 4, 1});
        hasher = Hasher(HashSpec{Algorithm::usr, d, m, 17, 0, 9});
        alpha = 0.8;
        codes = CodeTable(d * m);
        const auto all = hasher.codes_batch(data.values(), data.size(), alpha);
        const std::size_t nb = code_bytes(d * m);
        for (std::size_t i = 0; i < data.size(); ++i) {
            codes.add(i, std::span<const std::uint8_t>(all.data() + i * nb, nb));
        }
    }

    Dataset data, queries;
    Hasher hasher;
    double alpha = 1.0;
    CodeTable codes;
};

TEST_F(ProbeQueryTest, AllBucketsEqualsExhaustiveRanking) {
    const auto bt = build_table(codes, 8);
    const ProbeContext ctx{std::span<const Hasher>(&hasher, 1), alpha, &codes};
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto probed = probe_query(queries.row(q), bt, ctx, 256, 10);
        const auto scan = rank_topk(hasher.code(queries.row(q), alpha), codes, 10);
        EXPECT_EQ(probed.ids, scan.ids);
        EXPECT_EQ(probed.distances, scan.distances);
        EXPECT_EQ(probed.candidates, data.size());
    }
}

TEST_F(ProbeQueryTest, DuplicateInOwnBucket) {
    const auto bt = build_table(codes, 12);
    const ProbeContext ctx{std::span<const Hasher>(&hasher, 1), alpha, &codes};
    for (PointId id : {0u, 17u, 2999u}) {
        const auto r = probe_query(data.row(id), bt, ctx, 1, 1);
        ASSERT_EQ(r.size(), 1u);
        EXPECT_EQ(hamming(codes.code(r.ids[0]), codes.code(id)), 0u);
        EXPECT_EQ(r.distances[0], 0.0);
    }
}

TEST_F(ProbeQueryTest, RerankOrdersByTrueDistance) {
    const auto bt = build_table(codes, 8);
    const ProbeContext ctx{std::span<const Hasher>(&hasher, 1), alpha, &codes};
    auto lookup = [&](PointId id) -> std::optional<std::span<const float>> { return data.row(id); };
    const auto r = probe_query_rerank(queries.row(0), bt, ctx, 256, 10, lookup);
    const auto gt = exact_knn(data, queries, 10, Metric::euclidean);
    EXPECT_EQ(r.ids, std::vector<PointId>(gt.row(0).begin(), gt.row(0).end()));
}

TEST(ProbeQuery, RecallGrowsWithProbesAndTables) {
    const std::size_t d = 16, m = 2, n = 10000, M = 16;
    const Dataset data = gen_synthetic(SyntheticSpec{n, d, 32, 7});
    const Dataset queries = gen_synthetic(SyntheticSpec{150, d, 32, 7, 1});
    const GroundTruth gt = exact_knn(data, queries, 10, Metric::euclidean);
    StoreConfig cfg;
    cfg.d = d;
    cfg.m = m;
    cfg.seed = 3;
    cfg.key_bits = M;
    cfg.tables = 2;
    UnlearnStore two(cfg);
    cfg.tables = 1;
    UnlearnStore one(cfg);
    std::vector<PointId> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    one.insert_batch(data, ids);
    two.insert_batch(data, ids);

    auto mean_recall = [&](const UnlearnStore& s, std::size_t probes) {
        double r = 0;
        for (std::size_t q = 0; q < queries.size(); ++q) r += recall_at(s.query_probe(queries.row(q), probes, 10), gt.row(q));
        return r / static_cast<double>(queries.size());
    };
    double prev = -1;
    for (std::size_t probes : {1u, 4u, 16u, 64u}) {
        const double r1 = mean_recall(one, probes);
        const double r2 = mean_recall(two, probes);
        EXPECT_GE(r1, prev) << probes;
        EXPECT_GE(r2, r1) << probes;
        prev = r1;
    }
}
