#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "usrlsh/binary_index.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/dataset.hpp"
#include "usrlsh/dataset_io.hpp"
#include "usrlsh/random.hpp"
#include "usrlsh/unlearning_store.hpp"
#include "usrlsh/wire.hpp"

namespace usrlsh {

/// k true neighbours per query, stored query-major.
struct GroundTruth {
    std::size_t k = 0;
    std::vector<PointId> ids;

    std::size_t queries() const noexcept { return k == 0 ? 0 : ids.size() / k; }
    std::span<const PointId> row(std::size_t q) const { return std::span<const PointId>(ids).subspan(q * k, k); }
    bool operator==(const GroundTruth&) const = default;
};

/// Brute-force k nearest neighbours by Euclidean distance, ties by ascending
/// id. Data point i has id `data_ids[i]`, or i when data_ids is empty. For
/// the angular metric both sides are normalized first.
inline GroundTruth exact_knn(const Dataset& data, const Dataset& queries, std::size_t k, Metric metric,
                             std::span<const PointId> data_ids = {}) {
    if (k == 0) throw InvalidArgumentError("k must be positive");
    if (k > data.size()) {
        throw InvalidArgumentError("k = " + std::to_string(k) + " exceeds the dataset size " +
                                   std::to_string(data.size()));
    }
    if (!data_ids.empty()) require_dim(data_ids.size(), data.size(), "data id list");
    if (!queries.empty()) require_dim(queries.dim(), data.dim(), "query vectors");
    if (metric == Metric::angular) {
        return exact_knn(normalize_angular(data), queries.empty() ? queries : normalize_angular(queries), k,
                         Metric::euclidean, data_ids);
    }
    const std::size_t d = data.dim();
    GroundTruth gt;
    gt.k = k;
    gt.ids.reserve(queries.size() * k);
    std::vector<std::pair<double, PointId>> scored(data.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const float* qv = queries.row(q).data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const float* xv = data.values().data() + i * d;
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double t = static_cast<double>(qv[j]) - static_cast<double>(xv[j]);
                acc += t * t;
            }
            scored[i] = {acc, data_ids.empty() ? PointId(i) : data_ids[i]};
        }
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
        for (std::size_t r = 0; r < k; ++r) gt.ids.push_back(scored[r].second);
    }
    return gt;
}

namespace detail {

inline std::size_t overlap(std::span<const PointId> result, std::span<const PointId> truth) {
    std::unordered_set<PointId> t(truth.begin(), truth.end());
    std::size_t hits = 0;
    for (PointId id : result) hits += t.count(id);
    return hits;
}

}  // namespace detail

/// |result ∩ truth| / |result|.
inline double precision_at(std::span<const PointId> result, std::span<const PointId> truth) {
    if (result.empty()) throw InvalidArgumentError("precision is undefined for an empty result");
    return static_cast<double>(detail::overlap(result, truth)) / static_cast<double>(result.size());
}

/// |result ∩ truth| / |truth|.
inline double recall_at(std::span<const PointId> result, std::span<const PointId> truth) {
    if (truth.empty()) throw InvalidArgumentError("recall is undefined for an empty truth set");
    return static_cast<double>(detail::overlap(result, truth)) / static_cast<double>(truth.size());
}

inline double precision_at(const QueryResult& r, std::span<const PointId> truth) { return precision_at(r.ids, truth); }
inline double recall_at(const QueryResult& r, std::span<const PointId> truth) { return recall_at(r.ids, truth); }

struct PRPoint {
    std::size_t k_hat = 0;
    double recall = 0.0;
    double precision = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;
    double auc = 0.0;
};

/// Trapezoidal area under precision over recall. Points are sorted by
/// recall; nothing is extrapolated beyond the first and last point.
inline double pr_auc(std::vector<PRPoint> points) {
    std::stable_sort(points.begin(), points.end(),
                     [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += (points[i].recall - points[i - 1].recall) * (points[i].precision + points[i - 1].precision) / 2.0;
    }
    return area;
}

/// Mean precision and recall for k_hat = 1..khat_max. The result for k_hat
/// is the first k_hat entries of each ranked list, so every list must have
/// been produced with k_hat >= khat_max. A query whose list is empty at some
/// k_hat contributes precision 0 there.
inline PRCurve pr_curve(std::span<const QueryResult> ranked, const GroundTruth& truth, std::size_t khat_max) {
    if (khat_max == 0) throw InvalidArgumentError("khat_max must be positive");
    require_dim(ranked.size(), truth.queries(), "ranked result count");
    if (ranked.empty()) throw InvalidArgumentError("no queries to evaluate");
    for (const auto& r : ranked) {
        if (r.k_hat < khat_max) throw InvalidArgumentError("results do not cover k_hat up to " + std::to_string(khat_max));
    }
    PRCurve curve;
    for (std::size_t kh = 1; kh <= khat_max; ++kh) {
        double p = 0.0;
        double r = 0.0;
        for (std::size_t q = 0; q < ranked.size(); ++q) {
            const auto& ids = ranked[q].ids;
            std::span<const PointId> prefix(ids.data(), std::min(kh, ids.size()));
            if (!prefix.empty()) p += precision_at(prefix, truth.row(q));
            r += recall_at(prefix, truth.row(q));
        }
        const auto nq = static_cast<double>(ranked.size());
        curve.points.push_back({kh, r / nq, p / nq});
    }
    curve.auc = pr_auc(curve.points);
    return curve;
}

struct QpsStats {
    std::size_t queries = 0;
    double seconds = 0.0;
    double qps = 0.0;
};

/// Runs `run(q)` single-threaded over the query set, cycling until at least
/// `min_queries` have been executed.
template <typename Run>
QpsStats measure_qps(const Dataset& queries, Run&& run, std::size_t min_queries = 1000) {
    if (queries.empty()) throw InvalidArgumentError("no queries to time");
    const std::size_t total = std::max(min_queries, queries.size());
    std::size_t sink = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < total; ++i) sink += run(queries.row(i % queries.size())).size();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    volatile std::size_t keep = sink;
    (void)keep;
    QpsStats s{total, elapsed.count(), 0.0};
    s.qps = s.seconds > 0.0 ? static_cast<double>(total) / s.seconds : 0.0;
    return s;
}

inline QpsStats measure_qps(const UnlearnStore& store, const Dataset& queries, const QueryOptions& opt,
                            std::size_t min_queries = 1000) {
    return measure_qps(queries, [&](std::span<const float> q) { return store.query(q, opt); }, min_queries);
}

struct DeleteTiming {
    std::vector<PointId> ids;
    std::vector<double> seconds;
    double mean_seconds = 0.0;
};

/// Ids chosen for a deletion run: `count` distinct ids drawn from the
/// store's ids in ascending order with a seeded generator.
inline std::vector<PointId> pick_deletions(const UnlearnStore& store, std::size_t count, std::uint64_t seed) {
    if (store.size() < count) {
        throw InvalidArgumentError("need at least " + std::to_string(count) + " points to delete, store has " +
                                   std::to_string(store.size()));
    }
    std::vector<PointId> pool(store.ids().begin(), store.ids().end());
    std::sort(pool.begin(), pool.end());
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(count);
    return pool;
}

/// Deletes `count` points one at a time and times each deletion.
inline DeleteTiming measure_delete(UnlearnStore& store, std::size_t count = 10, std::uint64_t seed = 0) {
    DeleteTiming t;
    t.ids = pick_deletions(store, count, seed);
    for (PointId id : t.ids) {
        const auto start = std::chrono::steady_clock::now();
        store.remove(id);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        t.seconds.push_back(elapsed.count());
    }
    double sum = 0.0;
    for (double s : t.seconds) sum += s;
    t.mean_seconds = t.seconds.empty() ? 0.0 : sum / static_cast<double>(t.seconds.size());
    return t;
}

/// Wall time of a full rehash, the stand-in for retraining.
inline double measure_rebuild(UnlearnStore& store) {
    const auto start = std::chrono::steady_clock::now();
    store.rebuild();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return elapsed.count();
}

struct BenchRow {
    std::string algorithm;
    std::size_t bits = 0;
    std::size_t m = 0;
    std::size_t T = 0;
    std::size_t n_probes = 0;
    std::size_t k_hat = 0;
    double precision = 0.0;
    double recall = 0.0;
    double pr_auc = 0.0;
    double qps = 0.0;
    double delete_mean_s = 0.0;
};

inline constexpr const char* kBenchHeader =
    "algorithm,bits,m,T,n_probes,k_hat,precision,recall,pr_auc,qps,delete_mean_s";

inline void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
    out << kBenchHeader << '\n';
    const auto old_precision = out.precision(10);
    for (const auto& r : rows) {
        out << r.algorithm << ',' << r.bits << ',' << r.m << ',' << r.T << ',' << r.n_probes << ',' << r.k_hat << ','
            << r.precision << ',' << r.recall << ',' << r.pr_auc << ',' << r.qps << ',' << r.delete_mean_s << '\n';
    }
    out.precision(old_precision);
}

inline constexpr char kGroundTruthMagic[5] = "USRG";

/// "USRG", u32 k, u64 Q, then Q x k u64 ids.
inline void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
    out.write(kGroundTruthMagic, 4);
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(gt.k));
    wire::put<std::uint64_t>(out, gt.queries());
    for (PointId id : gt.ids) wire::put<std::uint64_t>(out, id);
}

inline GroundTruth read_ground_truth(std::istream& in) {
    wire::expect_magic(in, kGroundTruthMagic);
    GroundTruth gt;
    gt.k = wire::get<std::uint32_t>(in, "k");
    const auto q = wire::get<std::uint64_t>(in, "query count");
    if (gt.k == 0 && q != 0) throw FormatError("ground truth with k = 0 lists queries");
    for (std::uint64_t i = 0; i < q * gt.k; ++i) gt.ids.push_back(wire::get<std::uint64_t>(in, "ids"));
    wire::expect_end(in);
    return gt;
}

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_ground_truth(out, gt);
    if (!out) throw IoError("failed writing " + path.string());
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_ground_truth(in);
}

}  // namespace usrlsh
