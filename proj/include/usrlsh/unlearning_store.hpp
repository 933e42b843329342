#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "usrlsh/binary_index.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/dataset.hpp"
#include "usrlsh/dataset_io.hpp"
#include "usrlsh/hasher.hpp"
#include "usrlsh/multiprobe.hpp"
#include "usrlsh/wire.hpp"

namespace usrlsh {

/// How alpha follows membership changes.
enum class AlphaMode : std::uint8_t {
    running = 0,  ///< O(1) update of (count, norm_sum)
    fresh = 1,    ///< norm_sum re-summed from the stored norms after every change
};

struct StoreConfig {
    Algorithm algo = Algorithm::usr;
    std::size_t d = 0;
    std::size_t m = 1;
    std::size_t T = kDefaultIterations;
    std::size_t bits = 0;  ///< 0 means m * d
    std::uint64_t seed = 0;
    std::size_t key_bits = 0;  ///< bucket key length M; 0 disables bucket tables
    std::size_t tables = 1;
    bool keep_raw = true;
    AlphaMode alpha_mode = AlphaMode::running;
    Metric metric = Metric::euclidean;

    HashSpec hash_spec(std::size_t table) const { return HashSpec{algo, d, m, T, bits, table_seed(seed, table)}; }
    std::size_t code_bits() const noexcept { return bits == 0 ? m * d : bits; }

    void validate() const {
        hash_spec(0).validate();
        if (tables == 0) throw ConfigError("at least one hash table is required");
        if (key_bits > kMaxKeyBits) throw ConfigError("key bits cannot exceed 64");
        if (key_bits > code_bits()) throw ConfigError("key bits M exceed the code length");
        if (tables > 1 && key_bits == 0) throw ConfigError("extra hash tables need bucket keys (key bits > 0)");
    }
};

struct NormStats {
    std::uint64_t count = 0;
    double norm_sum = 0.0;

    std::optional<double> mean_norm() const {
        if (count == 0) return std::nullopt;
        return norm_sum / static_cast<double>(count);
    }
};

inline double euclidean_norm(std::span<const float> x) {
    double sq = 0.0;
    for (float v : x) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
}

/// Query knobs. n_probes == 0 selects the exhaustive hamming scan.
struct QueryOptions {
    std::size_t k_hat = 10;
    std::size_t n_probes = 0;
    bool rerank = false;
};

/// Indexed dataset supporting online insertion and deletion.
///
/// Codes are computed once, under the alpha in force when the point was
/// inserted, and are never rewritten by later membership changes. rebuild()
/// rehashes everything under the current alpha. Per-slot arrays (norms, raw
/// vectors, extra-table codes) follow the swap-with-last moves of the
/// primary code table so a slot index addresses the same point everywhere.
///
/// Mutations need exclusive access; const members are safe to call
/// concurrently.
class UnlearnStore {
public:
    UnlearnStore() = default;

    explicit UnlearnStore(const StoreConfig& config) : config_(config) {
        config.validate();
        for (std::size_t t = 0; t < config.tables; ++t) {
            hashers_.emplace_back(config.hash_spec(t));
            codes_.emplace_back(config.code_bits());
        }
        if (config.key_bits > 0) buckets_ = BucketTable(config.key_bits, config.tables);
    }

    const StoreConfig& config() const noexcept { return config_; }
    const NormStats& stats() const noexcept { return stats_; }
    std::size_t size() const noexcept { return codes_.empty() ? 0 : codes_[0].size(); }
    bool empty() const noexcept { return size() == 0; }
    bool contains(PointId id) const { return !codes_.empty() && codes_[0].contains(id); }
    bool has_raw() const noexcept { return config_.keep_raw; }
    bool has_buckets() const noexcept { return buckets_.has_value(); }

    /// Alpha derived from the current statistics; nullopt while it is undefined.
    std::optional<double> alpha() const { return alpha_; }

    const CodeTable& codes(std::size_t table = 0) const { return codes_.at(table); }
    const Hasher& hasher(std::size_t table = 0) const { return hashers_.at(table); }
    std::span<const Hasher> hashers() const noexcept { return hashers_; }
    const BucketTable* bucket_table() const noexcept { return buckets_ ? &*buckets_ : nullptr; }
    std::span<const PointId> ids() const noexcept { return codes_[0].ids(); }
    BinaryCode code(PointId id, std::size_t table = 0) const { return codes_.at(table).code(id); }

    std::optional<std::span<const float>> raw(PointId id) const {
        if (!config_.keep_raw) return std::nullopt;
        auto slot = codes_[0].slot_of(id);
        if (!slot) return std::nullopt;
        return std::span<const float>(raw_.data() + *slot * config_.d, config_.d);
    }

    std::optional<double> stored_norm(PointId id) const {
        auto slot = codes_[0].slot_of(id);
        if (!slot) return std::nullopt;
        return norms_[*slot];
    }

    /// Adds one point. Statistics and alpha are updated first and the point
    /// is hashed under the new alpha. Nothing changes if an error is thrown.
    void insert(std::span<const float> x, PointId id) {
        require_dim(x.size(), config_.d, "inserted vector");
        require_finite(x, "inserted vector");
        if (contains(id)) throw DuplicateIdError("id " + std::to_string(id) + " already present");
        const double norm = euclidean_norm(x);
        NormStats next{stats_.count + 1, stats_.norm_sum + norm};
        if (config_.alpha_mode == AlphaMode::fresh) next.norm_sum = sum_norms() + norm;
        const auto next_alpha = alpha_for(next);
        const double a = hashing_alpha(next_alpha);

        std::vector<std::vector<std::uint8_t>> new_codes;
        for (const auto& h : hashers_) new_codes.push_back(h.codes_batch(x, 1, a));

        for (std::size_t t = 0; t < codes_.size(); ++t) {
            codes_[t].add(id, new_codes[t]);
            if (buckets_) buckets_->insert(t, buckets_->key_of(new_codes[t]), id);
        }
        norms_.push_back(norm);
        if (config_.keep_raw) raw_.insert(raw_.end(), x.begin(), x.end());
        stats_ = next;
        alpha_ = next_alpha;
    }

    /// Adds many points at once; all of them are hashed under the alpha of
    /// the final membership.
    void insert_batch(const Dataset& xs, std::span<const PointId> ids) {
        require_dim(ids.size(), xs.size(), "id list");
        if (xs.empty()) return;
        require_dim(xs.dim(), config_.d, "inserted vectors");
        std::unordered_set<PointId> seen;
        seen.reserve(ids.size());
        std::vector<double> norms(xs.size());
        NormStats next = stats_;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (contains(ids[i]) || !seen.insert(ids[i]).second) {
                throw DuplicateIdError("id " + std::to_string(ids[i]) + " already present");
            }
            auto row = xs.row(i);
            for (float v : row) {
                if (!std::isfinite(v)) {
                    throw InvalidArgumentError("vector at index " + std::to_string(i) + " contains a non-finite value");
                }
            }
            norms[i] = euclidean_norm(row);
            next.count += 1;
            next.norm_sum += norms[i];
        }
        if (config_.alpha_mode == AlphaMode::fresh) {
            next.norm_sum = sum_norms();
            for (double n : norms) next.norm_sum += n;
        }
        const auto next_alpha = alpha_for(next);
        const double a = hashing_alpha(next_alpha);

        std::vector<std::vector<std::uint8_t>> new_codes;
        for (const auto& h : hashers_) new_codes.push_back(h.codes_batch(xs.values(), xs.size(), a));

        const std::size_t nb = code_bytes(config_.code_bits());
        for (std::size_t t = 0; t < codes_.size(); ++t) {
            codes_[t].reserve(size() + xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                std::span<const std::uint8_t> c(new_codes[t].data() + i * nb, nb);
                codes_[t].add(ids[i], c);
                if (buckets_) buckets_->insert(t, buckets_->key_of(c), ids[i]);
            }
        }
        norms_.insert(norms_.end(), norms.begin(), norms.end());
        if (config_.keep_raw) raw_.insert(raw_.end(), xs.values().begin(), xs.values().end());
        stats_ = next;
        alpha_ = next_alpha;
    }

    /// Removes one point without touching any other stored code.
    void remove(PointId id) {
        auto slot = codes_[0].slot_of(id);
        if (!slot) throw NotFoundError("id " + std::to_string(id) + " is not in the store");
        const double norm = norms_[*slot];
        for (std::size_t t = 0; t < codes_.size(); ++t) {
            if (buckets_) buckets_->erase(t, buckets_->key_of(codes_[t].code_bytes_at(*slot)), id);
            codes_[t].remove(id);
        }
        const std::size_t last = norms_.size() - 1;
        norms_[*slot] = norms_[last];
        norms_.pop_back();
        if (config_.keep_raw) {
            const std::size_t d = config_.d;
            if (*slot != last) std::copy_n(raw_.begin() + last * d, d, raw_.begin() + *slot * d);
            raw_.resize(last * d);
        }
        stats_.count -= 1;
        if (stats_.count == 0) {
            stats_.norm_sum = 0.0;
        } else if (config_.alpha_mode == AlphaMode::fresh) {
            stats_.norm_sum = sum_norms();
        } else {
            stats_.norm_sum -= norm;
        }
        alpha_ = alpha_for(stats_);
    }

    /// Recomputes the statistics from the raw vectors and rehashes every point.
    void rebuild() {
        if (!config_.keep_raw) throw UnsupportedError("rebuild needs raw vectors but this store keeps codes only");
        if (empty()) return;
        const std::size_t n = size();
        NormStats next{n, 0.0};
        std::vector<double> norms(n);
        for (std::size_t i = 0; i < n; ++i) {
            norms[i] = euclidean_norm(std::span<const float>(raw_.data() + i * config_.d, config_.d));
            next.norm_sum += norms[i];
        }
        const auto next_alpha = alpha_for(next);
        const double a = hashing_alpha(next_alpha);

        const std::vector<PointId> ids(codes_[0].ids().begin(), codes_[0].ids().end());
        std::vector<CodeTable> fresh;
        std::optional<BucketTable> buckets;
        if (config_.key_bits > 0) buckets = BucketTable(config_.key_bits, config_.tables);
        const std::size_t nb = code_bytes(config_.code_bits());
        for (std::size_t t = 0; t < hashers_.size(); ++t) {
            const auto all = hashers_[t].codes_batch(raw_, n, a);
            CodeTable table(config_.code_bits());
            table.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::span<const std::uint8_t> c(all.data() + i * nb, nb);
                table.add(ids[i], c);
                if (buckets) buckets->insert(t, buckets->key_of(c), ids[i]);
            }
            fresh.push_back(std::move(table));
        }
        codes_ = std::move(fresh);
        buckets_ = std::move(buckets);
        norms_ = std::move(norms);
        stats_ = next;
        alpha_ = next_alpha;
    }

    /// Alpha used to hash queries: the current one, or 1 when undefined
    /// (the store is then empty or all-zero and the value is irrelevant).
    double query_alpha() const noexcept { return alpha_.value_or(1.0); }

    BinaryCode hash_query(std::span<const float> q) const {
        require_dim(q.size(), config_.d, "query");
        return hashers_[0].code(q, query_alpha());
    }

    /// Hamming scan of the primary table. With rerank, the hamming top k_hat
    /// list is reordered by exact distance.
    QueryResult query_exhaustive(std::span<const float> q, std::size_t k_hat, bool rerank = false) const {
        if (k_hat == 0) throw InvalidArgumentError("k_hat must be positive");
        auto r = rank_topk(hash_query(q), codes_[0], k_hat);
        if (rerank) r = rerank_true(q, r, raw_lookup());
        return r;
    }

    /// Multi-probe bucket lookup. With rerank, every bucket candidate is
    /// ranked by exact distance instead of hamming distance.
    QueryResult query_probe(std::span<const float> q, std::size_t n_probes, std::size_t k_hat,
                            bool rerank = false) const {
        if (!buckets_) throw UnsupportedError("store was built without bucket tables (key bits = 0)");
        require_dim(q.size(), config_.d, "query");
        ProbeContext ctx{hashers_, query_alpha(), &codes_[0]};
        if (rerank) return probe_query_rerank(q, *buckets_, ctx, n_probes, k_hat, raw_lookup());
        return probe_query(q, *buckets_, ctx, n_probes, k_hat);
    }

    QueryResult query(std::span<const float> q, const QueryOptions& opt) const {
        return opt.n_probes == 0 ? query_exhaustive(q, opt.k_hat, opt.rerank)
                                 : query_probe(q, opt.n_probes, opt.k_hat, opt.rerank);
    }

    void write(std::ostream& out) const;
    static UnlearnStore read(std::istream& in);

    /// Writes to a sibling temporary file and renames it over `path`.
    void save(const std::filesystem::path& path) const {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + tmp.string());
            write(out);
            out.flush();
            if (!out) throw IoError("failed writing " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
    }

    static UnlearnStore load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        return read(in);
    }

private:
    struct RawLookup {
        const UnlearnStore* store;
        std::optional<std::span<const float>> operator()(PointId id) const { return store->raw(id); }
    };

    RawLookup raw_lookup() const {
        if (!config_.keep_raw) throw UnsupportedError("rerank needs raw vectors but this store keeps codes only");
        return RawLookup{this};
    }

    double sum_norms() const {
        double s = 0.0;
        for (double n : norms_) s += n;
        return s;
    }

    std::optional<double> alpha_for(const NormStats& s) const {
        const auto mean = s.mean_norm();
        if (!mean || !(*mean > 0.0)) return std::nullopt;
        return compute_alpha(config_.m * config_.d, *mean);
    }

    double hashing_alpha(const std::optional<double>& a) const {
        if (a) return *a;
        if (hashers_[0].uses_alpha()) throw DegenerateDatasetError("mean Euclidean norm is zero, alpha is undefined");
        return 1.0;
    }

    StoreConfig config_;
    std::vector<Hasher> hashers_;
    std::vector<CodeTable> codes_;
    std::optional<BucketTable> buckets_;
    std::vector<double> norms_;
    std::vector<float> raw_;
    NormStats stats_;
    std::optional<double> alpha_;
};

// File layout (little-endian):
//   code table: "USRL", u16 version, u32 bits, u64 N, N x (u64 id, code bytes)
//   stats:      u64 count, f64 norm_sum
//   hasher:     u32 d, u32 m, u32 T, u64 seed
//   store:      u8 algo, u32 key_bits, u32 tables, u8 alpha_mode, u8 metric, u8 has_raw,
//               N x f64 norm, (tables - 1) x N x code bytes, [N x d x f32 raw]
// Per-slot sections follow the slot order of the code table records.

inline void UnlearnStore::write(std::ostream& out) const {
    write_code_table(out, codes_[0]);
    wire::put<std::uint64_t>(out, stats_.count);
    wire::put<double>(out, stats_.norm_sum);
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_.d));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_.m));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_.T));
    wire::put<std::uint64_t>(out, config_.seed);
    wire::put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.algo));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_.key_bits));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(config_.tables));
    wire::put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.alpha_mode));
    wire::put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.metric));
    wire::put<std::uint8_t>(out, config_.keep_raw ? 1 : 0);
    for (double n : norms_) wire::put<double>(out, n);
    for (std::size_t t = 1; t < codes_.size(); ++t) {
        for (std::size_t slot = 0; slot < size(); ++slot) wire::put_bytes(out, codes_[t].code_bytes_at(slot));
    }
    if (config_.keep_raw) {
        for (float v : raw_) wire::put<float>(out, v);
    }
}

inline UnlearnStore UnlearnStore::read(std::istream& in) {
    CodeTable primary = read_code_table(in);
    NormStats stats;
    stats.count = wire::get<std::uint64_t>(in, "stats count");
    stats.norm_sum = wire::get<double>(in, "stats norm_sum");

    StoreConfig cfg;
    cfg.d = wire::get<std::uint32_t>(in, "hasher d");
    cfg.m = wire::get<std::uint32_t>(in, "hasher m");
    cfg.T = wire::get<std::uint32_t>(in, "hasher T");
    cfg.seed = wire::get<std::uint64_t>(in, "hasher seed");
    const auto algo = wire::get<std::uint8_t>(in, "algorithm");
    if (algo > static_cast<std::uint8_t>(Algorithm::sblsh)) throw FormatError("unknown algorithm tag");
    cfg.algo = static_cast<Algorithm>(algo);
    cfg.bits = primary.bits();
    if (cfg.algo == Algorithm::usr && cfg.bits != cfg.m * cfg.d) throw FormatError("code length does not equal m * d");
    cfg.key_bits = wire::get<std::uint32_t>(in, "key bits");
    cfg.tables = wire::get<std::uint32_t>(in, "table count");
    const auto mode = wire::get<std::uint8_t>(in, "alpha mode");
    const auto metric = wire::get<std::uint8_t>(in, "metric");
    const auto has_raw = wire::get<std::uint8_t>(in, "raw flag");
    if (mode > 1 || metric > 1 || has_raw > 1) throw FormatError("invalid store flags");
    cfg.alpha_mode = static_cast<AlphaMode>(mode);
    cfg.metric = static_cast<Metric>(metric);
    cfg.keep_raw = has_raw == 1;
    if (cfg.tables > 64) throw FormatError("implausible table count");

    const std::size_t n = primary.size();
    if (stats.count != n) throw FormatError("stats count disagrees with the number of records");
    if (!std::isfinite(stats.norm_sum) || stats.norm_sum < 0.0) throw FormatError("invalid norm sum");

    if (cfg.d > (1u << 20) || cfg.m > (1u << 16)) throw FormatError("implausible hasher dimensions");

    // Sections are read incrementally so a corrupt header cannot trigger a huge allocation.
    std::vector<double> norms;
    for (std::size_t i = 0; i < n; ++i) norms.push_back(wire::get<double>(in, "norms"));
    const std::size_t nb = primary.bytes_per_code();
    std::vector<std::uint8_t> extra;
    for (std::size_t i = 0; i < (cfg.tables - 1) * n; ++i) {
        const auto old = extra.size();
        extra.resize(old + nb);
        wire::read_exact(in, extra.data() + old, nb, "extra table codes");
    }
    std::vector<float> raw;
    if (cfg.keep_raw) {
        for (std::size_t i = 0; i < n * cfg.d; ++i) raw.push_back(wire::get<float>(in, "raw vectors"));
    }
    wire::expect_end(in);

    UnlearnStore store;
    try {
        store = UnlearnStore(cfg);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("stored configuration is invalid: ") + e.what());
    }
    for (std::size_t t = 1; t < cfg.tables; ++t) {
        for (std::size_t slot = 0; slot < n; ++slot) {
            const auto* c = extra.data() + ((t - 1) * n + slot) * nb;
            if (cfg.bits % 8 != 0 && (c[nb - 1] >> (cfg.bits % 8)) != 0) {
                throw FormatError("extra table code has non-zero padding bits");
            }
            store.codes_[t].add(primary.ids()[slot], std::span<const std::uint8_t>(c, nb));
        }
    }
    store.codes_[0] = std::move(primary);
    store.norms_ = std::move(norms);
    store.raw_ = std::move(raw);
    if (store.buckets_) {
        for (std::size_t t = 0; t < cfg.tables; ++t) {
            const CodeTable& table = store.codes_[t];
            for (std::size_t slot = 0; slot < n; ++slot) {
                store.buckets_->insert(t, store.buckets_->key_of(table.code_bytes_at(slot)), table.ids()[slot]);
            }
        }
    }
    store.stats_ = stats;
    store.alpha_ = store.alpha_for(stats);
    return store;
}

}  // namespace usrlsh
