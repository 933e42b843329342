// Index a small synthetic dataset, query it, delete a point and query again.

#include <iostream>

#include "usrlsh/usrlsh.hpp"

int main() {
    using namespace usrlsh;

    const Dataset data = gen_synthetic(SyntheticSpec{5000, 32, 16, 7});
    const Dataset queries = gen_synthetic(SyntheticSpec{5, 32, 16, 7, 1});

    StoreConfig cfg;
    cfg.d = 32;
    cfg.m = 4;  // 128-bit codes
    cfg.seed = 7;
    cfg.key_bits = 12;
    UnlearnStore store(cfg);

    std::vector<PointId> ids(data.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = 1000 + i;
    store.insert_batch(data, ids);
    std::cout << "indexed " << store.size() << " points, alpha = " << *store.alpha() << '\n';

    const GroundTruth truth = exact_knn(data, queries, 10, Metric::euclidean, ids);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const QueryResult scan = store.query_exhaustive(queries.row(q), 10);
        const QueryResult probed = store.query_probe(queries.row(q), 32, 10);
        std::cout << "query " << q << ": recall@10 scan " << recall_at(scan, truth.row(q)) << ", probe "
                  << recall_at(probed, truth.row(q)) << " (" << probed.candidates << " candidates)\n";
    }

    const PointId victim = store.query_exhaustive(queries.row(0), 1).ids.at(0);
    store.remove(victim);
    const QueryResult after = store.query_exhaustive(queries.row(0), 1);
    std::cout << "deleted " << victim << ", nearest is now " << after.ids.at(0) << ", alpha = " << *store.alpha()
              << '\n';
}
