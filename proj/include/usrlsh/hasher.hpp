#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "usrlsh/baseline_hashers.hpp"
#include "usrlsh/binary_code.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/projection.hpp"
#include "usrlsh/usr_hasher.hpp"

namespace usrlsh {

enum class Algorithm : std::uint8_t { usr = 0, simhash = 1, sblsh = 2 };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::usr: return "usr";
        case Algorithm::simhash: return "simhash";
        case Algorithm::sblsh: return "sblsh";
    }
    return "unknown";
}

inline Algorithm parse_algorithm(std::string_view name) {
    if (name == "usr") return Algorithm::usr;
    if (name == "simhash") return Algorithm::simhash;
    if (name == "sblsh") return Algorithm::sblsh;
    throw ConfigError("unknown algorithm '" + std::string(name) + "' (expected usr, simhash or sblsh)");
}

/// Everything needed to rebuild a hash function deterministically.
struct HashSpec {
    Algorithm algo = Algorithm::usr;
    std::size_t d = 0;
    std::size_t m = 1;
    std::size_t T = kDefaultIterations;
    /// Code length. 0 means m * d, which is the only legal value for usr.
    std::size_t bits = 0;
    std::uint64_t seed = 0;

    std::size_t code_bits() const noexcept { return bits == 0 ? m * d : bits; }

    void validate() const {
        if (d == 0) throw ConfigError("data dimension d must be positive");
        if (m == 0) throw ConfigError("stacking count m must be positive");
        if (T == 0) throw ConfigError("iteration count T must be at least 1");
        if (algo == Algorithm::usr && bits != 0 && bits != m * d) {
            throw ConfigError("usr codes always have m * d bits");
        }
    }
};

/// Seed of the projection backing hash table `table` (table 0 uses `seed` itself).
constexpr std::uint64_t table_seed(std::uint64_t seed, std::size_t table) noexcept {
    return table == 0 ? seed : derive_seed(seed, 0x7ab1e00000000000ULL + table);
}

/// Runtime-selected hash function: USR-LSH, simHash or Super-Bit LSH.
/// Only usr consumes alpha; the baselines ignore it.
class Hasher {
public:
    Hasher() = default;
    explicit Hasher(const HashSpec& spec) : spec_(spec) {
        spec.validate();
        switch (spec.algo) {
            case Algorithm::usr: impl_ = StackedProjection(spec.d, spec.m, spec.seed); break;
            case Algorithm::simhash: impl_ = GaussianProjection(spec.code_bits(), spec.d, spec.seed); break;
            case Algorithm::sblsh: impl_ = SuperBitProjection(spec.code_bits(), spec.d, spec.seed); break;
        }
    }

    const HashSpec& spec() const noexcept { return spec_; }
    Algorithm algo() const noexcept { return spec_.algo; }
    std::size_t dim() const noexcept { return spec_.d; }
    std::size_t bits() const noexcept { return spec_.code_bits(); }
    bool uses_alpha() const noexcept { return spec_.algo == Algorithm::usr; }

    /// Pre-binarization values for `count` row-major points; out is count x bits.
    void values_batch(std::span<const float> rows, std::size_t count, double alpha, std::span<double> out) const {
        require_dim(rows.size(), count * dim(), "hasher input");
        require_dim(out.size(), count * bits(), "hasher output");
        if (count == 0) return;
        if (const auto* usr = std::get_if<StackedProjection>(&impl_)) {
            hash_values_batch(rows, count, *usr, HasherConfig{spec_.d, spec_.m, spec_.T, alpha}, out);
        } else if (const auto* gauss = std::get_if<GaussianProjection>(&impl_)) {
            for (std::size_t i = 0; i < count; ++i) {
                auto x = rows.subspan(i * dim(), dim());
                require_finite_at(x, i);
                gauss->project(x, out.subspan(i * bits(), bits()));
            }
        } else {
            const auto& sb = std::get<SuperBitProjection>(impl_);
            std::vector<double> xin(dim() * detail::kHashBatch);
            std::vector<double> yout(bits() * detail::kHashBatch);
            std::vector<double> scratch;
            for (std::size_t first = 0; first < count; first += detail::kHashBatch) {
                const std::size_t batch = std::min(detail::kHashBatch, count - first);
                detail::gather_interleaved(rows, dim(), first, batch, xin.data());
                sb.project_interleaved(xin.data(), batch, yout.data(), scratch);
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t j = 0; j < bits(); ++j) out[(first + b) * bits() + j] = yout[j * batch + b];
                }
            }
        }
    }

    std::vector<double> values(std::span<const float> x, double alpha) const {
        require_dim(x.size(), dim(), "hasher input");
        std::vector<double> out(bits());
        values_batch(x, 1, alpha, out);
        return out;
    }

    BinaryCode code(std::span<const float> x, double alpha) const { return pack_signs(values(x, alpha)); }

    /// Packed codes for `count` row-major points, code_bytes(bits) bytes each.
    std::vector<std::uint8_t> codes_batch(std::span<const float> rows, std::size_t count, double alpha) const {
        const std::size_t nb = code_bytes(bits());
        std::vector<std::uint8_t> out(count * nb);
        constexpr std::size_t kChunk = 1024;
        std::vector<double> values;
        for (std::size_t first = 0; first < count; first += kChunk) {
            const std::size_t n = std::min(kChunk, count - first);
            values.resize(n * bits());
            values_batch(rows.subspan(first * dim(), n * dim()), n, alpha, values);
            for (std::size_t i = 0; i < n; ++i) {
                pack_signs_into(std::span<const double>(values).subspan(i * bits(), bits()),
                                out.data() + (first + i) * nb);
            }
        }
        return out;
    }

    const StackedProjection* usr_projection() const noexcept { return std::get_if<StackedProjection>(&impl_); }

private:
    static void require_finite_at(std::span<const float> x, std::size_t index) {
        for (float v : x) {
            if (!std::isfinite(v)) {
                throw InvalidArgumentError("vector at index " + std::to_string(index) + " contains a non-finite value");
            }
        }
    }

    HashSpec spec_;
    std::variant<StackedProjection, GaussianProjection, SuperBitProjection> impl_;
};

}  // namespace usrlsh
