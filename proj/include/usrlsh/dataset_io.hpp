#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "usrlsh/common.hpp"
#include "usrlsh/dataset.hpp"
#include "usrlsh/random.hpp"

namespace usrlsh {

enum class Metric : std::uint8_t { euclidean = 0, angular = 1 };

inline std::string_view to_string(Metric m) { return m == Metric::angular ? "angular" : "euclidean"; }

inline Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "angular") return Metric::angular;
    throw ConfigError("unknown metric '" + std::string(name) + "' (expected euclidean or angular)");
}

namespace detail {

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::int32_t read_i32_le(const char* p) {
    const auto* u = reinterpret_cast<const unsigned char*>(p);
    return static_cast<std::int32_t>(std::uint32_t(u[0]) | (std::uint32_t(u[1]) << 8) | (std::uint32_t(u[2]) << 16) |
                                     (std::uint32_t(u[3]) << 24));
}

inline float read_f32_le(const char* p) {
    const auto* u = reinterpret_cast<const unsigned char*>(p);
    const std::uint32_t bits =
        std::uint32_t(u[0]) | (std::uint32_t(u[1]) << 8) | (std::uint32_t(u[2]) << 16) | (std::uint32_t(u[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

// Shared reader for fvecs (4-byte float components) and bvecs (1-byte uint8).
template <std::size_t ComponentBytes, typename Decode>
Dataset read_vecs(const std::filesystem::path& path, Decode decode) {
    const std::vector<char> bytes = read_file(path);
    if (bytes.empty()) return Dataset();
    if (bytes.size() < 4) throw FormatError(path.string() + ": truncated record header");
    const std::int32_t dim = read_i32_le(bytes.data());
    if (dim <= 0) throw FormatError(path.string() + ": non-positive dimension " + std::to_string(dim));
    const std::size_t record = 4 + ComponentBytes * static_cast<std::size_t>(dim);
    if (bytes.size() % record != 0) {
        throw FormatError(path.string() + ": file size is not a multiple of the record size (trailing bytes)");
    }
    const std::size_t n = bytes.size() / record;
    std::vector<float> values;
    values.reserve(n * static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < n; ++i) {
        const char* rec = bytes.data() + i * record;
        if (read_i32_le(rec) != dim) {
            throw FormatError(path.string() + ": record " + std::to_string(i) + " has inconsistent dimension");
        }
        for (std::int32_t k = 0; k < dim; ++k) values.push_back(decode(rec + 4 + ComponentBytes * k));
    }
    return Dataset(static_cast<std::size_t>(dim), std::move(values));
}

}  // namespace detail

/// Records of (int32 d, d float32), little-endian. Empty file -> empty dataset.
inline Dataset load_fvecs(const std::filesystem::path& path) {
    return detail::read_vecs<4>(path, [](const char* p) { return detail::read_f32_le(p); });
}

/// Records of (int32 d, d uint8); components are promoted to float.
inline Dataset load_bvecs(const std::filesystem::path& path) {
    return detail::read_vecs<1>(path, [](const char* p) { return static_cast<float>(static_cast<unsigned char>(*p)); });
}

inline void save_fvecs(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < data.size(); ++i) {
        detail::write_u32_le(out, static_cast<std::uint32_t>(data.dim()));
        for (float v : data.row(i)) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            detail::write_u32_le(out, bits);
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

/// Picks the loader by extension (.fvecs or .bvecs).
inline Dataset load_vectors(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".fvecs") return load_fvecs(path);
    if (ext == ".bvecs") return load_bvecs(path);
    throw ConfigError("unsupported vector file extension '" + ext + "' (expected .fvecs or .bvecs)");
}

/// Divides every row by its Euclidean norm (accumulated in double).
inline Dataset normalize_angular(const Dataset& xs) {
    Dataset out = xs;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.row(i);
        double sq = 0.0;
        for (float v : row) sq += static_cast<double>(v) * v;
        if (sq == 0.0) throw InvalidArgumentError("zero vector at index " + std::to_string(i) + " has no direction");
        const double norm = std::sqrt(sq);
        for (float& v : row) v = static_cast<float>(v / norm);
    }
    return out;
}

struct SyntheticSpec {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t clusters = 32;
    std::uint64_t seed = 0;
    /// Independent sample streams share cluster centers (0 = data, 1 = queries).
    std::uint64_t stream = 0;
    /// Standard deviation of the center coordinates; points have unit variance around them.
    double center_scale = 2.0;
};

/// Seeded Gaussian mixture. Centers come from the seed alone, so every
/// stream of the same seed samples the same mixture.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.n == 0 && spec.dim > 0) return Dataset(spec.dim);
    if (spec.dim == 0 || spec.clusters == 0) throw ConfigError("synthetic data needs positive d and cluster count");
    Rng center_rng(derive_seed(spec.seed, 0));
    std::vector<double> centers(spec.clusters * spec.dim);
    for (double& c : centers) c = spec.center_scale * center_rng.normal();

    Rng rng(derive_seed(spec.seed, 1 + spec.stream));
    std::vector<float> values(spec.n * spec.dim);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double* center = centers.data() + rng.below(spec.clusters) * spec.dim;
        for (std::size_t k = 0; k < spec.dim; ++k) values[i * spec.dim + k] = static_cast<float>(center[k] + rng.normal());
    }
    return Dataset(spec.dim, std::move(values));
}

inline Dataset gen_synthetic(std::size_t n, std::size_t dim, std::size_t clusters, std::uint64_t seed) {
    return gen_synthetic(SyntheticSpec{n, dim, clusters, seed});
}

/// JSON dataset description. `source` lists vector files; when it is empty
/// the dataset is synthetic and generated from (count, dimension, seed).
struct DatasetManifest {
    std::string name;
    Metric metric = Metric::euclidean;
    std::size_t dimension = 0;
    std::size_t count = 0;
    std::vector<std::string> source;
    std::uint64_t seed = 0;

    void validate() const {
        if (dimension == 0 || count == 0) throw ConfigError("manifest dimension and count must be positive");
    }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = nlohmann::json{{"name", m.name},           {"metric", std::string(to_string(m.metric))},
                       {"dimension", m.dimension}, {"count", m.count},
                       {"source", m.source},       {"seed", m.seed}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    static const char* const kFields[] = {"name", "metric", "dimension", "count", "source", "seed"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
            throw FormatError("manifest has unknown field '" + key + "'");
        }
    }
    try {
        m.name = j.at("name").get<std::string>();
        m.metric = parse_metric(j.at("metric").get<std::string>());
        m.dimension = j.at("dimension").get<std::size_t>();
        m.count = j.at("count").get<std::size_t>();
        const auto& src = j.at("source");
        m.source = src.is_string() ? std::vector<std::string>{src.get<std::string>()} : src.get<std::vector<std::string>>();
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    m.validate();
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return j.get<DatasetManifest>();
}

/// Materializes a manifest: concatenates its source files (relative paths
/// resolve against `base_dir`) or generates the synthetic mixture.
inline Dataset load_manifest_data(const DatasetManifest& m, const std::filesystem::path& base_dir = {}) {
    Dataset out;
    if (m.source.empty()) {
        out = gen_synthetic(m.count, m.dimension, 32, m.seed);
    } else {
        out = Dataset(m.dimension);
        for (const auto& s : m.source) {
            std::filesystem::path p(s);
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            Dataset part = load_vectors(p);
            if (part.empty()) continue;
            if (part.dim() != m.dimension) throw FormatError(p.string() + ": dimension disagrees with manifest");
            for (std::size_t i = 0; i < part.size() && out.size() < m.count; ++i) out.push_back(part.row(i));
        }
        if (out.size() != m.count) {
            throw FormatError("manifest declares " + std::to_string(m.count) + " vectors but sources provide " +
                              std::to_string(out.size()));
        }
    }
    return m.metric == Metric::angular ? normalize_angular(out) : out;
}

}  // namespace usrlsh
