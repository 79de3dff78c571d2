#include "kefs/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace kefs {

void BenchConfig::validate() const {
    if (unseen < 2) {
        throw ConfigError("benchmark requires at least 2 unseen classes");
    }
    if (classes < unseen + 2) {
        throw ConfigError("benchmark requires at least 2 seen classes");
    }
    if (feature_dim < 1 || word_dim < 1 || attr_dim < 1) {
        throw ConfigError("benchmark dimensions must be positive");
    }
    if (train_per_class < 1 || test_per_class < 1) {
        throw ConfigError("benchmark sample counts must be positive");
    }
    if (!(radius > 0.0)) {
        throw ConfigError("benchmark radius must be positive");
    }
    if (cluster_std < 0.0 || semantic_noise < 0.0) {
        throw ConfigError("benchmark noise levels must be non-negative");
    }
    const int seen = classes - unseen;
    const int r = rank > 0 ? std::min(rank, seen) : seen;
    if (feature_dim < r) {
        throw ConfigError("feature_dim must be at least the basis rank");
    }
    if (seen > 2 * r) {
        throw ConfigError("too many seen classes for the basis rank");
    }
    if (unseen > r * (r - 1) / 2) {
        throw ConfigError("too many unseen classes for the basis rank");
    }
}

BenchArtifacts generate_synthetic_benchmark(const BenchConfig& config, std::uint64_t seed) {
    config.validate();
    const int seen = config.classes - config.unseen;
    const int rank = config.rank > 0 ? std::min(config.rank, seen) : seen;

    Rng rng = make_rng(seed);
    Rng rng_basis = rng.child(101);
    Rng rng_sem = rng.child(102);
    Rng rng_train = rng.child(103);
    Rng rng_test = rng.child(104);

    Matrix basis = rng_basis.normal_matrix(config.feature_dim, rank);
    for (int j = 0; j < rank; ++j) {
        for (int k = 0; k < j; ++k) {
            basis.col(j) -= basis.col(k).dot(basis.col(j)) * basis.col(k);
        }
        const double norm = basis.col(j).norm();
        if (norm < 1e-9) {
            throw Error("degenerate benchmark basis");
        }
        basis.col(j) /= norm;
    }

    // Seen classes sit on single basis directions, unseen classes on
    // normalized two-direction blends, so every unseen mean stays inside the
    // span reachable from seen training data.
    std::vector<Vector> coeff(static_cast<std::size_t>(config.classes));
    for (int c = 0; c < seen; ++c) {
        Vector u = Vector::Zero(rank);
        u(c % rank) = 1.0;
        if (c >= rank) {
            u((c + 1) % rank) = 0.5;
            u /= u.norm();
        }
        coeff[static_cast<std::size_t>(c)] = u;
    }
    // Disjoint index pairs first so the first few unseen classes share no
    // basis direction with each other; remaining lexicographic pairs follow
    // once those run out.
    std::vector<std::pair<int, int>> pairs;
    for (int p = 0; p + 1 < rank; p += 2) {
        pairs.emplace_back(p, p + 1);
    }
    for (int p = 0; p < rank; ++p) {
        for (int q = p + 1; q < rank; ++q) {
            if (!(p % 2 == 0 && q == p + 1)) {
                pairs.emplace_back(p, q);
            }
        }
    }
    for (int placed = 0; placed < config.unseen; ++placed) {
        const auto [p, q] = pairs[static_cast<std::size_t>(placed)];
        Vector u = Vector::Zero(rank);
        u(p) = 1.0;
        u(q) = 1.0;
        coeff[static_cast<std::size_t>(seen + placed)] = u / u.norm();
    }

    BenchArtifacts bench;
    bench.class_means.resize(config.classes, config.feature_dim);
    for (int c = 0; c < config.classes; ++c) {
        bench.class_means.row(c) =
            (config.radius * basis * coeff[static_cast<std::size_t>(c)]).transpose();
    }

    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.feature_dim));
    Matrix proj_word = rng_sem.normal_matrix(config.word_dim, config.feature_dim) * proj_scale;
    Matrix proj_attr = rng_sem.normal_matrix(config.attr_dim, config.feature_dim) * proj_scale;
    for (int c = 0; c < config.classes; ++c) {
        ClassEntry entry;
        entry.id = c + 1;
        entry.name = "class_" + std::to_string(c + 1);
        entry.seen = c < seen;
        entry.word_vec = proj_word * bench.class_means.row(c).transpose() +
                         config.semantic_noise * rng_sem.normal_vector(config.word_dim);
        entry.attr_vec = proj_attr * bench.class_means.row(c).transpose() +
                         config.semantic_noise * rng_sem.normal_vector(config.attr_dim);
        bench.semantics.classes.push_back(std::move(entry));
    }
    bench.semantics.validate_and_sort();

    auto draw = [&](Rng& r, int c) {
        RegionRecord rec;
        rec.class_id = c + 1;
        rec.feature = bench.class_means.row(c).transpose() +
                      config.cluster_std * r.normal_vector(config.feature_dim);
        return rec;
    };
    for (int c = 0; c < seen; ++c) {
        for (int i = 0; i < config.train_per_class; ++i) {
            bench.train_features.records.push_back(draw(rng_train, c));
        }
    }
    for (int c = 0; c < config.classes; ++c) {
        for (int i = 0; i < config.test_per_class; ++i) {
            bench.test_features.records.push_back(draw(rng_test, c));
        }
    }

    // Pairwise mean distances drive the taxonomy, shared ingredient tokens,
    // and scene co-occurrence counts, so all three graph sources agree on
    // which classes are related.
    Matrix dist = Matrix::Zero(config.classes, config.classes);
    for (int i = 0; i < config.classes; ++i) {
        for (int j = i + 1; j < config.classes; ++j) {
            const double d = (bench.class_means.row(i) - bench.class_means.row(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    bench.taxonomy.levels = 2;
    bench.taxonomy.nodes.push_back({0, -1, 0});
    std::vector<int> unpaired(static_cast<std::size_t>(config.classes));
    std::iota(unpaired.begin(), unpaired.end(), 0);
    int next_mid = config.classes + 1;
    while (unpaired.size() >= 2) {
        std::size_t bi = 0, bj = 1;
        double best = dist(unpaired[0], unpaired[1]);
        for (std::size_t i = 0; i < unpaired.size(); ++i) {
            for (std::size_t j = i + 1; j < unpaired.size(); ++j) {
                if (dist(unpaired[i], unpaired[j]) < best) {
                    best = dist(unpaired[i], unpaired[j]);
                    bi = i;
                    bj = j;
                }
            }
        }
        const int mid = next_mid++;
        bench.taxonomy.nodes.push_back({mid, 0, 1});
        bench.taxonomy.nodes.push_back({unpaired[bi] + 1, mid, 2});
        bench.taxonomy.nodes.push_back({unpaired[bj] + 1, mid, 2});
        unpaired.erase(unpaired.begin() + static_cast<std::ptrdiff_t>(bj));
        unpaired.erase(unpaired.begin() + static_cast<std::ptrdiff_t>(bi));
    }
    if (!unpaired.empty()) {
        const int mid = next_mid++;
        bench.taxonomy.nodes.push_back({mid, 0, 1});
        bench.taxonomy.nodes.push_back({unpaired[0] + 1, mid, 2});
    }
    bench.taxonomy.validate();

    bench.ingredients.groups = {"g0"};
    for (int c = 0; c < config.classes; ++c) {
        std::vector<int> order;
        for (int j = 0; j < config.classes; ++j) {
            if (j != c) order.push_back(j);
        }
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return dist(c, a) != dist(c, b) ? dist(c, a) < dist(c, b) : a < b;
        });
        std::vector<IngredientEntry> entries;
        entries.push_back({"i" + std::to_string(c + 1), "g0"});
        entries.push_back({"i" + std::to_string(order[0] + 1), "g0"});
        entries.push_back({"i" + std::to_string(order[1] + 1), "g0"});
        bench.ingredients.classes.emplace_back(c + 1, std::move(entries));
    }

    bench.counts.O = Matrix::Zero(config.classes, config.classes);
    bench.counts.T = Vector::Zero(config.classes);
    for (int i = 0; i < config.classes; ++i) {
        for (int j = 0; j < config.classes; ++j) {
            if (i == j) continue;
            const double u = dist(i, j) / config.radius;
            bench.counts.O(i, j) = std::round(20.0 * std::exp(-u * u));
        }
        bench.counts.T(i) = bench.counts.O.row(i).sum() + 5.0;
    }
    return bench;
}

void save_benchmark(const std::string& out_dir, const BenchArtifacts& bench) {
    ensure_directory(out_dir);
    save_semantics(out_dir + "/semantics.json", bench.semantics);
    save_features(out_dir + "/train_features.jsonl", bench.train_features);
    save_features(out_dir + "/test_features.jsonl", bench.test_features);
    save_taxonomy(out_dir + "/taxonomy.json", bench.taxonomy);
    save_ingredients(out_dir + "/ingredients.json", bench.ingredients);
    save_counts(out_dir + "/counts.json", bench.counts);
}

}  // namespace kefs
