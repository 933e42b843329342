#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "usrlsh/binary_code.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/wire.hpp"

namespace usrlsh {

/// Ranked neighbours. Distances are hamming counts, or Euclidean distances
/// after rerank_true. `candidates` is how many points were examined.
struct QueryResult {
    std::vector<PointId> ids;
    std::vector<double> distances;
    std::size_t k_hat = 0;
    std::size_t candidates = 0;

    std::size_t size() const noexcept { return ids.size(); }
};

/// Dense table of equal-length codes with a parallel id array.
///
/// Codes are stored back to back with a stride rounded up to whole 64-bit
/// words (zero padded) so the scan never needs a tail path. Removal swaps the
/// last slot into the hole; slot order carries no meaning.
class CodeTable {
public:
    struct Removal {
        std::size_t slot;        ///< slot that was vacated
        std::size_t moved_from;  ///< slot whose entry now lives in `slot` (== slot if it was the last)
    };

    CodeTable() = default;
    explicit CodeTable(std::size_t bits) : bits_(bits), bytes_(code_bytes(bits)), stride_((bytes_ + 7) / 8 * 8) {}

    std::size_t bits() const noexcept { return bits_; }
    std::size_t bytes_per_code() const noexcept { return bytes_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    std::span<const PointId> ids() const noexcept { return ids_; }

    bool contains(PointId id) const { return slots_.contains(id); }
    std::optional<std::size_t> slot_of(PointId id) const {
        auto it = slots_.find(id);
        if (it == slots_.end()) return std::nullopt;
        return it->second;
    }

    std::span<const std::uint8_t> code_bytes_at(std::size_t slot) const {
        return {storage_.data() + slot * stride_, bytes_};
    }
    BinaryCode code_at(std::size_t slot) const {
        auto b = code_bytes_at(slot);
        return BinaryCode(bits_, std::vector<std::uint8_t>(b.begin(), b.end()));
    }
    BinaryCode code(PointId id) const {
        auto slot = slot_of(id);
        if (!slot) throw NotFoundError("id " + std::to_string(id) + " is not in the code table");
        return code_at(*slot);
    }

    void reserve(std::size_t n) {
        ids_.reserve(n);
        storage_.reserve(n * stride_);
        slots_.reserve(n);
    }

    void add(PointId id, std::span<const std::uint8_t> code) {
        require_dim(code.size(), bytes_, "code bytes");
        if (slots_.contains(id)) throw DuplicateIdError("id " + std::to_string(id) + " already present");
        slots_.emplace(id, ids_.size());
        ids_.push_back(id);
        storage_.resize(storage_.size() + stride_, 0);
        std::memcpy(storage_.data() + (ids_.size() - 1) * stride_, code.data(), bytes_);
    }

    void add(PointId id, const BinaryCode& code) {
        if (code.size() != bits_) throw DimensionError("code length does not match table");
        add(id, code.bytes());
    }

    Removal remove(PointId id) {
        auto it = slots_.find(id);
        if (it == slots_.end()) throw NotFoundError("id " + std::to_string(id) + " is not in the code table");
        const std::size_t slot = it->second;
        const std::size_t last = ids_.size() - 1;
        slots_.erase(it);
        if (slot != last) {
            ids_[slot] = ids_[last];
            std::memcpy(storage_.data() + slot * stride_, storage_.data() + last * stride_, stride_);
            slots_[ids_[slot]] = slot;
        }
        ids_.pop_back();
        storage_.resize(storage_.size() - stride_);
        return {slot, last};
    }

    /// Hamming distance between slot and a query padded to the table stride.
    std::size_t distance_padded(std::size_t slot, const std::uint64_t* query_words) const noexcept {
        const std::uint8_t* p = storage_.data() + slot * stride_;
        std::size_t dist = 0;
        for (std::size_t w = 0; w < stride_ / 8; ++w) {
            std::uint64_t word;
            std::memcpy(&word, p + 8 * w, 8);
            dist += static_cast<std::size_t>(std::popcount(word ^ query_words[w]));
        }
        return dist;
    }

    std::vector<std::uint64_t> pad_query(std::span<const std::uint8_t> code) const {
        require_dim(code.size(), bytes_, "query code bytes");
        std::vector<std::uint64_t> words(stride_ / 8, 0);
        std::memcpy(words.data(), code.data(), bytes_);
        return words;
    }

private:
    std::size_t bits_ = 0;
    std::size_t bytes_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::uint8_t> storage_;
    std::vector<PointId> ids_;
    std::unordered_map<PointId, std::size_t> slots_;
};

namespace detail {

/// Keeps the k smallest (distance, id) pairs seen so far.
template <typename Distance>
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) {}

    void offer(Distance dist, PointId id) {
        if (heap_.size() < k_) {
            heap_.emplace(dist, id);
        } else if (std::pair(dist, id) < heap_.top()) {
            heap_.pop();
            heap_.emplace(dist, id);
        }
    }

    QueryResult finish(std::size_t k_hat, std::size_t candidates) {
        std::vector<std::pair<Distance, PointId>> sorted;
        sorted.reserve(heap_.size());
        while (!heap_.empty()) {
            sorted.push_back(heap_.top());
            heap_.pop();
        }
        std::reverse(sorted.begin(), sorted.end());
        QueryResult r;
        r.k_hat = k_hat;
        r.candidates = candidates;
        for (const auto& [d, id] : sorted) {
            r.ids.push_back(id);
            r.distances.push_back(static_cast<double>(d));
        }
        return r;
    }

private:
    std::size_t k_;
    std::priority_queue<std::pair<Distance, PointId>> heap_;
};

}  // namespace detail

/// Exhaustive hamming ranking: the k_hat codes closest to `query`, ties by ascending id.
inline QueryResult rank_topk(const BinaryCode& query, const CodeTable& table, std::size_t k_hat) {
    if (k_hat == 0) throw InvalidArgumentError("k_hat must be positive");
    if (query.size() != table.bits()) throw DimensionError("query code length does not match table");
    detail::TopK<std::size_t> top(k_hat);
    const auto words = table.pad_query(query.bytes());
    const auto ids = table.ids();
    for (std::size_t slot = 0; slot < table.size(); ++slot) top.offer(table.distance_padded(slot, words.data()), ids[slot]);
    return top.finish(k_hat, table.size());
}

inline double euclidean_distance(std::span<const float> a, std::span<const float> b) {
    require_dim(a.size(), b.size(), "distance operands");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double t = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += t * t;
    }
    return std::sqrt(acc);
}

/// Reorders candidates by exact Euclidean distance (ties by id) and keeps k_hat.
/// `lookup(id)` returns std::optional<std::span<const float>>.
template <typename Lookup>
QueryResult rerank_true(std::span<const float> query, const QueryResult& candidates, Lookup&& lookup) {
    std::vector<std::pair<double, PointId>> scored;
    scored.reserve(candidates.ids.size());
    for (PointId id : candidates.ids) {
        std::optional<std::span<const float>> x = lookup(id);
        if (!x) throw NotFoundError("candidate id " + std::to_string(id) + " has no stored vector");
        scored.emplace_back(euclidean_distance(query, *x), id);
    }
    std::sort(scored.begin(), scored.end());
    const std::size_t keep = std::min(candidates.k_hat == 0 ? scored.size() : candidates.k_hat, scored.size());
    QueryResult r;
    r.k_hat = candidates.k_hat;
    r.candidates = candidates.candidates;
    for (std::size_t i = 0; i < keep; ++i) {
        r.ids.push_back(scored[i].second);
        r.distances.push_back(scored[i].first);
    }
    return r;
}

inline constexpr char kCodeTableMagic[5] = "USRL";
inline constexpr std::uint16_t kCodeTableVersion = 1;

/// Header ("USRL", u16 version, u32 md, u64 N) then N x (u64 id, ceil(md/8) code bytes).
inline void write_code_table(std::ostream& out, const CodeTable& table) {
    out.write(kCodeTableMagic, 4);
    wire::put<std::uint16_t>(out, kCodeTableVersion);
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(table.bits()));
    wire::put<std::uint64_t>(out, table.size());
    for (std::size_t slot = 0; slot < table.size(); ++slot) {
        wire::put<std::uint64_t>(out, table.ids()[slot]);
        wire::put_bytes(out, table.code_bytes_at(slot));
    }
}

inline CodeTable read_code_table(std::istream& in) {
    wire::expect_magic(in, kCodeTableMagic);
    const auto version = wire::get<std::uint16_t>(in, "version");
    if (version != kCodeTableVersion) throw FormatError("unsupported code table version " + std::to_string(version));
    const auto bits = wire::get<std::uint32_t>(in, "code length");
    const auto n = wire::get<std::uint64_t>(in, "record count");
    CodeTable table(bits);
    std::vector<std::uint8_t> code(table.bytes_per_code());
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto id = wire::get<std::uint64_t>(in, "record id");
        wire::read_exact(in, code.data(), code.size(), "record code");
        if (bits % 8 != 0 && !code.empty() && (code.back() >> (bits % 8)) != 0) {
            throw FormatError("record " + std::to_string(i) + " has non-zero padding bits");
        }
        try {
            table.add(id, code);
        } catch (const DuplicateIdError&) {
            throw FormatError("duplicate id " + std::to_string(id) + " in code table");
        }
    }
    return table;
}

}  // namespace usrlsh
