// usrlsh: build, query, benchmark and edit binary hash indexes from the command line.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "usrlsh/usrlsh.hpp"

namespace fs = std::filesystem;
using namespace usrlsh;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError("empty list '" + s + "'");
    return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) {
        std::size_t v = 0;
        auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw ConfigError("'" + item + "' is not a non-negative integer");
        }
        out.push_back(v);
    }
    return out;
}

struct Options {
    std::string algo = "usr";
    std::string m = "1";
    std::size_t T = kDefaultIterations;
    std::uint64_t seed = 0;
    std::size_t bits = 0;
    std::optional<std::size_t> key_bits;
    std::string probes = "0";
    std::size_t tables = 1;
    std::size_t k = 10;
    std::size_t khat_max = 100;
    std::string dataset;
    std::string queries;
    std::string out;
    bool rerank = false;
    std::string metric;
    std::string store;
    std::vector<std::string> ids;
    std::size_t count = 0;
    std::size_t dim = 0;
    std::size_t clusters = 32;
    std::uint64_t stream = 0;
    std::size_t deletions = 10;
    bool no_rebuild = false;
    bool fresh_alpha = false;
    bool code_only = false;
};

struct Loaded {
    Dataset data;
    Metric metric = Metric::euclidean;
    std::optional<DatasetManifest> manifest;
};

std::optional<Metric> metric_flag(const Options& o) {
    if (o.metric.empty()) return std::nullopt;
    return parse_metric(o.metric);
}

// A dataset argument is either a JSON manifest or a raw .fvecs/.bvecs file.
Loaded load_input(const std::string& path, std::optional<Metric> metric) {
    if (path.empty()) throw ConfigError("--dataset is required");
    Loaded l;
    fs::path p(path);
    if (p.extension() == ".json") {
        DatasetManifest m = load_manifest(p);
        if (metric) m.metric = *metric;
        l.data = load_manifest_data(m, p.parent_path());
        l.metric = m.metric;
        l.manifest = m;
    } else {
        l.metric = metric.value_or(Metric::euclidean);
        l.data = load_vectors(p);
        if (l.metric == Metric::angular) l.data = normalize_angular(l.data);
    }
    return l;
}

// Queries come from --queries, or from a second sample stream of a synthetic manifest.
Dataset load_queries(const Options& o, const Loaded& base, Metric metric) {
    if (!o.queries.empty()) {
        Loaded q = load_input(o.queries, metric);
        if (!base.data.empty() && !q.data.empty() && q.data.dim() != base.data.dim()) {
            throw DimensionError("query dimension " + std::to_string(q.data.dim()) + " differs from data dimension " +
                                 std::to_string(base.data.dim()));
        }
        return q.data;
    }
    if (base.manifest && base.manifest->source.empty()) {
        SyntheticSpec spec{1000, base.manifest->dimension, 32, base.manifest->seed, 1};
        Dataset q = gen_synthetic(spec);
        return metric == Metric::angular ? normalize_angular(q) : q;
    }
    throw ConfigError("--queries is required unless the dataset is a synthetic manifest");
}

std::vector<PointId> sequential_ids(std::size_t n) {
    std::vector<PointId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    return ids;
}

StoreConfig store_config(const Options& o, Algorithm algo, std::size_t d, std::size_t m, Metric metric,
                         bool T_given) {
    if (algo != Algorithm::usr && T_given) throw ConfigError("--T only applies to --algo usr");
    StoreConfig cfg;
    cfg.algo = algo;
    cfg.d = d;
    cfg.m = m;
    cfg.T = o.T;
    cfg.bits = algo == Algorithm::usr ? 0 : o.bits;
    if (algo == Algorithm::usr && o.bits != 0 && o.bits != m * d) throw ConfigError("usr codes always have m * d bits");
    cfg.seed = o.seed;
    cfg.key_bits = o.key_bits.value_or(std::min<std::size_t>(16, cfg.code_bits()));
    cfg.tables = o.tables;
    cfg.keep_raw = !o.code_only;
    cfg.alpha_mode = o.fresh_alpha ? AlphaMode::fresh : AlphaMode::running;
    cfg.metric = metric;
    cfg.validate();
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

int cmd_build(const Options& o, bool T_given) {
    if (o.out.empty()) throw ConfigError("--out is required");
    const auto ms = split_sizes(o.m);
    if (ms.size() != 1) throw ConfigError("build takes a single --m");
    const Algorithm algo = parse_algorithm(o.algo);
    Loaded l = load_input(o.dataset, metric_flag(o));
    std::size_t d = l.data.dim();
    if (d == 0 && l.manifest) d = l.manifest->dimension;
    if (d == 0) d = o.dim;
    if (d == 0) throw ConfigError("cannot infer the dimension of an empty vector file; pass --dim");
    const StoreConfig cfg = store_config(o, algo, d, ms[0], l.metric, T_given);

    const auto start = std::chrono::steady_clock::now();
    UnlearnStore store(cfg);
    store.insert_batch(l.data, sequential_ids(l.data.size()));
    const double secs = seconds_since(start);
    store.save(o.out);
    std::cout << "N=" << store.size() << " d=" << d << " md=" << cfg.code_bits() << " build_seconds=" << fmt(secs)
              << '\n';
    return 0;
}

int cmd_query(const Options& o) {
    UnlearnStore store = UnlearnStore::load(o.store);
    Loaded none;
    none.data = Dataset(store.config().d);
    const Metric metric = store.config().metric;
    Dataset queries = load_queries(o, none, metric);
    if (!queries.empty()) require_dim(queries.dim(), store.config().d, "query vectors");
    const auto probes = split_sizes(o.probes);
    if (probes.size() != 1) throw ConfigError("query takes a single --probes");
    const QueryOptions opt{o.k, probes[0], o.rerank};
    if (opt.k_hat == 0) throw ConfigError("--k must be positive");

    std::string csv = "query,rank,id,distance\n";
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const QueryResult r = store.query(queries.row(q), opt);
        for (std::size_t i = 0; i < r.size(); ++i) {
            csv += std::to_string(q) + ',' + std::to_string(i + 1) + ',' + std::to_string(r.ids[i]) + ',' +
                   fmt(r.distances[i]) + '\n';
        }
    }
    write_text(o.out, csv);
    return 0;
}

int cmd_gen(const Options& o) {
    if (o.out.empty()) throw ConfigError("--out is required");
    Dataset data;
    if (!o.dataset.empty()) {
        const DatasetManifest m = load_manifest(o.dataset);
        if (!m.source.empty()) throw ConfigError("gen needs a synthetic manifest (empty source)");
        data = gen_synthetic(SyntheticSpec{m.count, m.dimension, o.clusters, m.seed, o.stream});
        if (m.metric == Metric::angular) data = normalize_angular(data);
    } else {
        if (o.count == 0 || o.dim == 0) throw ConfigError("gen needs --dataset or both --count and --dim");
        data = gen_synthetic(SyntheticSpec{o.count, o.dim, o.clusters, o.seed, o.stream});
        if (metric_flag(o) == Metric::angular) data = normalize_angular(data);
    }
    save_fvecs(o.out, data);
    std::cout << "wrote " << data.size() << " vectors of dimension " << data.dim() << " to " << o.out << '\n';
    return 0;
}

int cmd_gt(const Options& o) {
    if (o.out.empty()) throw ConfigError("--out is required");
    Loaded l = load_input(o.dataset, metric_flag(o));
    Dataset queries = load_queries(o, l, l.metric);
    const auto start = std::chrono::steady_clock::now();
    const GroundTruth gt = exact_knn(l.data, queries, o.k, Metric::euclidean);
    save_ground_truth(o.out, gt);
    std::cout << "queries=" << gt.queries() << " k=" << gt.k << " seconds=" << fmt(seconds_since(start)) << '\n';
    return 0;
}

int cmd_unlearn(const Options& o) {
    if (o.ids.empty()) throw ConfigError("no ids to delete");
    std::vector<PointId> ids;
    std::unordered_set<PointId> seen;
    for (const auto& s : o.ids) {
        PointId id = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), id);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("'" + s + "' is not an id");
        if (!seen.insert(id).second) throw ConfigError("id " + s + " listed twice");
        ids.push_back(id);
    }
    UnlearnStore store = UnlearnStore::load(o.store);
    // All-or-nothing: refuse before mutating anything.
    for (PointId id : ids) {
        if (!store.contains(id)) throw NotFoundError("id " + std::to_string(id) + " is not in the store");
    }
    double total = 0.0;
    for (PointId id : ids) {
        const auto start = std::chrono::steady_clock::now();
        store.remove(id);
        const double secs = seconds_since(start);
        total += secs;
        const auto a = store.alpha();
        std::cout << "deleted id=" << id << " seconds=" << fmt(secs) << " alpha=" << (a ? fmt(*a) : "undefined")
                  << '\n';
    }
    std::cout << "mean_seconds=" << fmt(total / static_cast<double>(ids.size())) << '\n';
    store.save(o.out.empty() ? o.store : o.out);
    return 0;
}

int cmd_bench(const Options& o) {
    Loaded l = load_input(o.dataset, metric_flag(o));
    if (l.data.empty()) throw ConfigError("bench needs a non-empty dataset");
    Dataset queries = load_queries(o, l, l.metric);
    if (queries.empty()) throw ConfigError("bench needs at least one query");
    const std::size_t d = l.data.dim();
    if (o.k == 0 || o.khat_max < o.k) throw ConfigError("need 0 < --k <= --khat-max");

    std::vector<Algorithm> algos;
    for (const auto& a : split_list(o.algo)) algos.push_back(parse_algorithm(a));
    const auto ms = split_sizes(o.m);
    const auto probes = split_sizes(o.probes);
    for (std::size_t m : ms) {
        if (o.bits != 0 && o.bits != m * d) {
            throw ConfigError("bench compares algorithms at the usr budget of m * d bits; --bits must equal it");
        }
        for (Algorithm a : algos) store_config(o, a, d, m, l.metric, false);
    }

    std::cerr << "ground truth: " << queries.size() << " queries, k=" << o.k << '\n';
    const GroundTruth gt = exact_knn(l.data, queries, o.k, Metric::euclidean);
    const auto ids = sequential_ids(l.data.size());

    std::vector<BenchRow> rows;
    for (std::size_t m : ms) {
        for (Algorithm a : algos) {
            const StoreConfig cfg = store_config(o, a, d, m, l.metric, false);
            std::cerr << to_string(a) << " m=" << m << " bits=" << cfg.code_bits() << ": hashing " << l.data.size()
                      << " points\n";
            UnlearnStore store(cfg);
            store.insert_batch(l.data, ids);
            std::vector<std::size_t> row_index;
            for (std::size_t np : probes) {
                const QueryOptions sweep{o.khat_max, np, o.rerank};
                std::vector<QueryResult> ranked;
                ranked.reserve(queries.size());
                for (std::size_t q = 0; q < queries.size(); ++q) ranked.push_back(store.query(queries.row(q), sweep));
                const PRCurve curve = pr_curve(ranked, gt, o.khat_max);
                const PRPoint at_k = curve.points[o.k - 1];
                const QpsStats qps = measure_qps(store, queries, QueryOptions{o.k, np, o.rerank});
                BenchRow row;
                row.algorithm = std::string(to_string(a));
                row.bits = cfg.code_bits();
                row.m = m;
                row.T = a == Algorithm::usr ? cfg.T : 0;
                row.n_probes = np;
                row.k_hat = o.k;
                row.precision = at_k.precision;
                row.recall = at_k.recall;
                row.pr_auc = curve.auc;
                row.qps = qps.qps;
                row_index.push_back(rows.size());
                rows.push_back(row);
            }
            const std::size_t n_del = std::min(o.deletions, store.size());
            if (n_del > 0) {
                const DeleteTiming del = measure_delete(store, n_del, o.seed);
                for (std::size_t i : row_index) rows[i].delete_mean_s = del.mean_seconds;
            }
            if (!o.no_rebuild && a == Algorithm::usr && store.has_raw()) {
                std::cerr << "usr m=" << m << ": timing full rebuild\n";
                BenchRow row;
                row.algorithm = "rebuild";
                row.bits = cfg.code_bits();
                row.m = m;
                row.T = cfg.T;
                row.delete_mean_s = measure_rebuild(store);
                rows.push_back(row);
            }
        }
    }
    std::ostringstream csv;
    write_bench_csv(csv, rows);
    write_text(o.out, csv.str());
    return 0;
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--metric", o.metric, "euclidean or angular (overrides the manifest)");
}

void add_hash(CLI::App* sub, Options& o) {
    sub->add_option("--algo", o.algo, "usr, simhash or sblsh (bench: comma-separated list)");
    sub->add_option("--m", o.m, "Stacked rotations; code length is m * d (bench: list)");
    sub->add_option("--T", o.T, "USR iterations");
    sub->add_option("--bits", o.bits, "Code length for simhash/sblsh (default m * d)");
    sub->add_option("--key-bits", o.key_bits, "Bucket key length M (0 disables buckets; default min(16, md))");
    sub->add_option("--tables", o.tables, "Number of bucket tables L");
    sub->add_flag("--fresh-alpha", o.fresh_alpha, "Recompute the norm sum from scratch on every change");
    sub->add_flag("--code-only", o.code_only, "Do not keep raw vectors (disables rerank and rebuild)");
}

// Flags from a JSON object, inserted right after the subcommand so explicit
// flags, which come later, win.
std::vector<std::string> config_args(const fs::path& path, CLI::App* sub) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
    std::vector<std::string> args;
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (sub->get_option_no_throw(flag) == nullptr) {
            throw ConfigError(path.string() + ": '" + key + "' is not an option of '" + sub->get_name() + "'");
        }
        auto scalar = [&](const nlohmann::json& v) -> std::string {
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
            if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
            throw ConfigError(path.string() + ": unsupported value for '" + key + "'");
        };
        if (value.is_boolean()) {
            args.push_back(flag + "=" + (value.get<bool>() ? "true" : "false"));
        } else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v);
            args.push_back(flag);
            args.push_back(joined);
        } else {
            args.push_back(flag);
            args.push_back(scalar(value));
        }
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binary hashing indexes with online deletion", "usrlsh"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    Options o;
    std::string config;

    auto* build = app.add_subcommand("build", "Hash a dataset into a store file");
    auto* query = app.add_subcommand("query", "Query a store; writes query,rank,id,distance CSV");
    auto* bench = app.add_subcommand("bench", "Precision/recall, PR-AUC, QPS and deletion timing sweep");
    auto* unlearn = app.add_subcommand("unlearn", "Delete ids from a store");
    auto* gen = app.add_subcommand("gen", "Write a seeded synthetic Gaussian mixture as fvecs");
    auto* gt = app.add_subcommand("gt", "Exact k nearest neighbours");

    for (auto* sub : {build, query, bench, unlearn, gen, gt}) {
        sub->add_option("--config", config, "JSON file with default flag values");
        add_common(sub, o);
    }
    for (auto* sub : {build, bench}) {
        add_hash(sub, o);
        sub->add_option("--dataset", o.dataset, "Manifest (.json) or vector file (.fvecs/.bvecs)");
    }
    build->add_option("--out", o.out, "Store file to write")->required();
    build->add_option("--dim", o.dim, "Dimension to use when the vector file is empty");

    query->add_option("store", o.store, "Store file")->required();
    query->add_option("--queries", o.queries, "Query vectors (.fvecs/.bvecs or manifest)")->required();
    query->add_option("--k", o.k, "Results per query");
    query->add_option("--probes", o.probes, "Buckets probed per table (0 = exhaustive hamming scan)");
    query->add_flag("--rerank", o.rerank, "Order candidates by exact distance");
    query->add_option("--out", o.out, "CSV output (default stdout)");

    bench->add_option("--queries", o.queries, "Query vectors (default: 1000 synthetic queries)");
    bench->add_option("--k", o.k, "True neighbours per query");
    bench->add_option("--khat-max", o.khat_max, "Largest k_hat of the PR sweep");
    bench->add_option("--probes", o.probes, "Comma-separated probe counts (0 = exhaustive)");
    bench->add_flag("--rerank", o.rerank, "Order candidates by exact distance");
    bench->add_option("--deletions", o.deletions, "Points deleted in the timing run");
    bench->add_flag("--no-rebuild", o.no_rebuild, "Skip the full-rebuild timing row");
    bench->add_option("--out", o.out, "CSV output (default stdout)");

    unlearn->add_option("store", o.store, "Store file")->required();
    unlearn->add_option("ids", o.ids, "Ids to delete, one at a time")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    unlearn->add_option("--out", o.out, "Write the result here instead of replacing the store");

    gen->add_option("--dataset", o.dataset, "Synthetic manifest to materialize");
    gen->add_option("--count", o.count, "Number of vectors");
    gen->add_option("--dim", o.dim, "Dimension");
    gen->add_option("--clusters", o.clusters, "Mixture components");
    gen->add_option("--stream", o.stream, "Sample stream (0 = data, 1 = queries)");
    gen->add_option("--out", o.out, "fvecs file to write")->required();

    gt->add_option("--dataset", o.dataset, "Manifest or vector file")->required();
    gt->add_option("--queries", o.queries, "Query vectors (default: 1000 synthetic queries)");
    gt->add_option("--k", o.k, "Neighbours per query");
    gt->add_option("--out", o.out, "Ground-truth file to write")->required();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        // Resolve --config before parsing so its values can be spliced in.
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
            if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
            if (path.empty() || args.empty()) continue;
            CLI::App* sub = nullptr;
            for (auto* s : app.get_subcommands({})) {
                if (s->get_name() == args[0]) sub = s;
            }
            if (sub == nullptr) throw ConfigError("--config must follow a subcommand");
            auto extra = config_args(path, sub);
            args.insert(args.begin() + 1, extra.begin(), extra.end());
            break;
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "usrlsh: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "usrlsh: " << e.what() << '\n';
        return kExitData;
    }

    try {
        if (*build) return cmd_build(o, build->count("--T") > 0);
        if (*query) return cmd_query(o);
        if (*bench) return cmd_bench(o);
        if (*unlearn) return cmd_unlearn(o);
        if (*gen) return cmd_gen(o);
        if (*gt) return cmd_gt(o);
    } catch (const ConfigError& e) {
        std::cerr << "usrlsh: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "usrlsh: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "usrlsh: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
