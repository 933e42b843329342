#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "usrlsh/binary_code.hpp"
#include "usrlsh/binary_index.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/hasher.hpp"

namespace usrlsh {

inline constexpr std::size_t kMaxKeyBits = 64;

/// A set of key coordinates whose signs are flipped, with its probe score.
struct Perturbation {
    std::vector<std::uint32_t> flipped;  ///< ascending coordinate indices
    double score = 0.0;

    std::uint64_t mask() const noexcept {
        std::uint64_t m = 0;
        for (auto i : flipped) m |= std::uint64_t(1) << i;
        return m;
    }
};

/// Sum of |y_i| over the flipped coordinates. Terms are added in ascending
/// magnitude so the value matches the scores emitted by ProbeSequence.
inline double perturbation_score(std::span<const double> key_values, std::span<const std::uint32_t> flipped) {
    std::vector<double> terms;
    terms.reserve(flipped.size());
    for (auto i : flipped) {
        if (i >= key_values.size()) throw InvalidArgumentError("flipped coordinate out of range");
        terms.push_back(std::fabs(key_values[i]));
    }
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

/// Lazily enumerates sign-flip perturbations of the first M coordinates in
/// non-decreasing score order, starting with the empty perturbation.
///
/// Coordinates are ranked by ascending |y_i|. A heap state is a sorted set
/// of ranks; popping a state pushes its "shift" (last rank + 1 replaces the
/// last rank) and "expand" (append last rank + 1) successors. Every non-empty
/// subset is reached exactly once, and successors never score lower than
/// their parent because scores are summed in rank order.
class ProbeSequence {
public:
    ProbeSequence(std::span<const double> values, std::size_t key_bits) {
        if (key_bits > kMaxKeyBits) throw ConfigError("key bits cannot exceed 64");
        if (key_bits > values.size()) throw ConfigError("key bits exceed the hash value length");
        magnitude_.resize(key_bits);
        for (std::size_t i = 0; i < key_bits; ++i) magnitude_[i] = std::fabs(values[i]);
        by_rank_.resize(key_bits);
        std::iota(by_rank_.begin(), by_rank_.end(), 0u);
        std::stable_sort(by_rank_.begin(), by_rank_.end(),
                         [this](std::uint32_t a, std::uint32_t b) { return magnitude_[a] < magnitude_[b]; });
        if (key_bits > 0) push({0});
    }

    std::optional<Perturbation> next() {
        if (!emitted_empty_) {
            emitted_empty_ = true;
            return Perturbation{};
        }
        if (heap_.empty()) return std::nullopt;
        State s = heap_.top();
        heap_.pop();
        const std::uint32_t last = s.ranks.back();
        if (last + 1 < by_rank_.size()) {
            State shifted = s;
            shifted.ranks.back() = last + 1;
            push(std::move(shifted.ranks));
            State expanded = s;
            expanded.ranks.push_back(last + 1);
            push(std::move(expanded.ranks));
        }
        Perturbation p;
        p.score = s.score;
        for (auto r : s.ranks) p.flipped.push_back(by_rank_[r]);
        std::sort(p.flipped.begin(), p.flipped.end());
        return p;
    }

private:
    struct State {
        double score;
        std::vector<std::uint32_t> ranks;
    };
    struct Greater {
        bool operator()(const State& a, const State& b) const {
            if (a.score != b.score) return a.score > b.score;
            return a.ranks > b.ranks;
        }
    };

    void push(std::vector<std::uint32_t> ranks) {
        double s = 0.0;
        for (auto r : ranks) s += magnitude_[by_rank_[r]];
        heap_.push(State{s, std::move(ranks)});
    }

    std::vector<double> magnitude_;
    std::vector<std::uint32_t> by_rank_;
    std::priority_queue<State, std::vector<State>, Greater> heap_;
    bool emitted_empty_ = false;
};

/// First n_probes perturbations (fewer if 2^M is smaller).
inline std::vector<Perturbation> probe_sequence(std::span<const double> values, std::size_t key_bits,
                                                std::size_t n_probes) {
    if (n_probes == 0) throw InvalidArgumentError("n_probes must be at least 1");
    ProbeSequence seq(values, key_bits);
    std::vector<Perturbation> out;
    while (out.size() < n_probes) {
        auto p = seq.next();
        if (!p) break;
        out.push_back(std::move(*p));
    }
    return out;
}

/// L inverted indexes from an M-bit code prefix to the ids in that bucket.
class BucketTable {
public:
    BucketTable() = default;
    BucketTable(std::size_t key_bits, std::size_t tables) : key_bits_(key_bits), maps_(tables) {
        if (key_bits == 0 || key_bits > kMaxKeyBits) throw ConfigError("key bits must be in [1, 64]");
        if (tables == 0) throw ConfigError("at least one hash table is required");
    }

    std::size_t key_bits() const noexcept { return key_bits_; }
    std::size_t tables() const noexcept { return maps_.size(); }

    std::uint64_t key_of(std::span<const std::uint8_t> code) const noexcept { return code_prefix(code, key_bits_); }

    void insert(std::size_t table, std::uint64_t key, PointId id) { maps_.at(table)[key].push_back(id); }

    void erase(std::size_t table, std::uint64_t key, PointId id) {
        auto& map = maps_.at(table);
        auto it = map.find(key);
        if (it == map.end()) throw NotFoundError("bucket for id " + std::to_string(id) + " does not exist");
        auto& ids = it->second;
        auto pos = std::find(ids.begin(), ids.end(), id);
        if (pos == ids.end()) throw NotFoundError("id " + std::to_string(id) + " is not in its bucket");
        *pos = ids.back();
        ids.pop_back();
        if (ids.empty()) map.erase(it);
    }

    std::span<const PointId> bucket(std::size_t table, std::uint64_t key) const {
        const auto& map = maps_.at(table);
        auto it = map.find(key);
        if (it == map.end()) return {};
        return it->second;
    }

    std::size_t bucket_count(std::size_t table) const { return maps_.at(table).size(); }

    /// Every id of one table, in no particular order.
    std::vector<PointId> all_ids(std::size_t table) const {
        std::vector<PointId> out;
        for (const auto& [key, ids] : maps_.at(table)) out.insert(out.end(), ids.begin(), ids.end());
        return out;
    }

private:
    std::size_t key_bits_ = 0;
    std::vector<std::unordered_map<std::uint64_t, std::vector<PointId>>> maps_;
};

/// One bucket table per code table; table t is keyed by the prefix of per_table[t].
inline BucketTable build_table(std::span<const CodeTable> per_table, std::size_t key_bits) {
    if (per_table.empty()) throw ConfigError("at least one hash table is required");
    for (const auto& codes : per_table) {
        if (key_bits > codes.bits()) throw ConfigError("key bits M exceed the code length");
    }
    BucketTable bt(key_bits, per_table.size());
    for (std::size_t t = 0; t < per_table.size(); ++t) {
        const auto& codes = per_table[t];
        for (std::size_t slot = 0; slot < codes.size(); ++slot) {
            bt.insert(t, bt.key_of(codes.code_bytes_at(slot)), codes.ids()[slot]);
        }
    }
    return bt;
}

inline BucketTable build_table(const CodeTable& codes, std::size_t key_bits) {
    return build_table(std::span<const CodeTable>(&codes, 1), key_bits);
}

/// Hash functions and alpha used to place a query into every table, plus
/// the full-length codes used to rank candidates.
struct ProbeContext {
    std::span<const Hasher> hashers;  ///< one per bucket table; hashers[0] produces the ranking codes
    double alpha = 1.0;
    const CodeTable* ranking_codes = nullptr;
};

/// Multi-probe candidate generation: the union of ids in the first n_probes
/// buckets of every table, sorted ascending.
inline std::vector<PointId> probe_candidates(std::span<const float> query, const BucketTable& bt,
                                             const ProbeContext& ctx, std::size_t n_probes,
                                             std::vector<double>* ranking_values = nullptr) {
    if (n_probes == 0) throw InvalidArgumentError("n_probes must be at least 1");
    if (ctx.hashers.size() != bt.tables()) throw ConfigError("need one hasher per bucket table");
    std::vector<PointId> candidates;
    for (std::size_t t = 0; t < bt.tables(); ++t) {
        std::vector<double> values = ctx.hashers[t].values(query, ctx.alpha);
        const BinaryCode code = pack_signs(values);
        const std::uint64_t key = bt.key_of(code.bytes());
        ProbeSequence seq(values, bt.key_bits());
        for (std::size_t probe = 0; probe < n_probes; ++probe) {
            auto p = seq.next();
            if (!p) break;
            auto ids = bt.bucket(t, key ^ p->mask());
            candidates.insert(candidates.end(), ids.begin(), ids.end());
        }
        if (t == 0 && ranking_values) *ranking_values = std::move(values);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    return candidates;
}

/// Probes the buckets, then ranks the candidates by full-code hamming
/// distance (ties by id) and keeps k_hat.
inline QueryResult probe_query(std::span<const float> query, const BucketTable& bt, const ProbeContext& ctx,
                               std::size_t n_probes, std::size_t k_hat) {
    if (k_hat == 0) throw InvalidArgumentError("k_hat must be positive");
    if (!ctx.ranking_codes) throw ConfigError("probe context has no ranking codes");
    std::vector<double> values;
    const auto candidates = probe_candidates(query, bt, ctx, n_probes, &values);
    const CodeTable& codes = *ctx.ranking_codes;
    const auto words = codes.pad_query(pack_signs(values).bytes());
    detail::TopK<std::size_t> top(k_hat);
    for (PointId id : candidates) {
        auto slot = codes.slot_of(id);
        if (!slot) throw NotFoundError("bucketed id " + std::to_string(id) + " has no ranking code");
        top.offer(codes.distance_padded(*slot, words.data()), id);
    }
    return top.finish(k_hat, candidates.size());
}

/// Same probing, but candidates are ranked by exact Euclidean distance.
template <typename Lookup>
QueryResult probe_query_rerank(std::span<const float> query, const BucketTable& bt, const ProbeContext& ctx,
                               std::size_t n_probes, std::size_t k_hat, Lookup&& lookup) {
    if (k_hat == 0) throw InvalidArgumentError("k_hat must be positive");
    QueryResult all;
    all.ids = probe_candidates(query, bt, ctx, n_probes);
    all.distances.assign(all.ids.size(), 0.0);
    all.k_hat = k_hat;
    all.candidates = all.ids.size();
    return rerank_true(query, all, std::forward<Lookup>(lookup));
}

}  // namespace usrlsh
