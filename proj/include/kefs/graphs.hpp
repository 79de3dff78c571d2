#pragma once

// Construction of the three class-correlation adjacency matrices (shared
// ingredients, taxonomy ancestry, label co-occurrence), their threshold
// quantization, and Laplacian normalization.

#include "kefs/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace kefs {

struct TaxonomyNode {
    int id = 0;
    int parent = -1;  // -1 marks the root
    int level = 0;
};

struct ClassTaxonomy {
    int levels = 0;  // leaves sit at this level, root at 0
    std::vector<TaxonomyNode> nodes;

    // Throws InputError unless there is exactly one root at level 0, every
    // other node's level is parent level + 1, and all leaves sit at `levels`.
    void validate() const;

    std::vector<int> leaf_ids() const;  // ascending
};

struct IngredientEntry {
    std::string ingredient;
    std::string group;
};

struct IngredientTable {
    std::vector<std::string> groups;  // declared group vocabulary
    std::vector<std::pair<int, std::vector<IngredientEntry>>> classes;

    const std::vector<IngredientEntry>* find(int class_id) const;
};

struct CooccurrenceCounts {
    Matrix O;  // C x C symmetric pair counts
    Vector T;  // per-class occurrence counts
};

struct MultiSourceGraphSet {
    Eigen::Index n = 0;
    double tau = 0.0;
    Matrix A1, A2, A3;              // logical adjacencies
    Matrix A1_hat, A2_hat, A3_hat;  // Laplacian-normalized forms
};

// Entry (i,j): ingredients shared by classes i and j under a common group;
// diagonal: ingredient count of the class. Classes ordered per `class_ids`.
Matrix build_knowledge_adjacency(const IngredientTable& ingredients,
                                 const std::vector<int>& class_ids);

// Entry (i,j): level of the deepest common ancestor of the two leaves, 0 when
// only the root is shared; diagonal: the leaf level itself.
Matrix build_hyperclass_adjacency(const ClassTaxonomy& taxonomy,
                                  const std::vector<int>& class_ids);

// Entry (i,j): O_ij / T_i, with a zero row when T_i = 0.
Matrix build_probability_adjacency(const CooccurrenceCounts& counts);

// Scales by the global maximum, thresholds at tau, then forces self-loops.
Matrix normalize_and_quantize(const Matrix& raw, double tau);

// D^{-1/2} A D^{-1/2} with D the diagonal row-degree matrix.
Matrix laplacian_normalize(const Matrix& A);

// Builds all three logical adjacencies and their normalized forms. An empty
// ingredient table yields a self-loop-only A1.
MultiSourceGraphSet build_graph_set(const IngredientTable& ingredients,
                                    const ClassTaxonomy& taxonomy,
                                    const CooccurrenceCounts& counts,
                                    const std::vector<int>& class_ids, double tau);

}  // namespace kefs
