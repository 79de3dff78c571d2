#include "kefs/graphs.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

namespace kefs {

void ClassTaxonomy::validate() const {
    if (nodes.empty()) {
        throw InputError("taxonomy has no nodes");
    }
    if (levels < 1) {
        throw InputError("taxonomy levels must be >= 1, got " + std::to_string(levels));
    }
    std::map<int, const TaxonomyNode*> by_id;
    int roots = 0;
    for (const TaxonomyNode& node : nodes) {
        if (!by_id.emplace(node.id, &node).second) {
            throw InputError("duplicate taxonomy node id " + std::to_string(node.id));
        }
        if (node.parent < 0) {
            ++roots;
            if (node.level != 0) {
                throw InputError("root node " + std::to_string(node.id) + " at level " +
                                 std::to_string(node.level) + ", expected 0");
            }
        }
    }
    if (roots != 1) {
        throw InputError("taxonomy needs exactly one root, found " + std::to_string(roots));
    }
    std::set<int> parents;
    for (const TaxonomyNode& node : nodes) {
        if (node.parent >= 0) {
            auto it = by_id.find(node.parent);
            if (it == by_id.end()) {
                throw InputError("node " + std::to_string(node.id) + " references missing parent " +
                                 std::to_string(node.parent));
            }
            if (node.level != it->second->level + 1) {
                throw InputError("node " + std::to_string(node.id) + " at level " +
                                 std::to_string(node.level) + " under parent at level " +
                                 std::to_string(it->second->level));
            }
            parents.insert(node.parent);
        }
    }
    for (const TaxonomyNode& node : nodes) {
        if (parents.count(node.id) == 0 && node.level != levels) {
            throw InputError("leaf " + std::to_string(node.id) + " at level " +
                             std::to_string(node.level) + ", expected " + std::to_string(levels));
        }
    }
}

std::vector<int> ClassTaxonomy::leaf_ids() const {
    std::set<int> parents;
    for (const TaxonomyNode& node : nodes) {
        if (node.parent >= 0) {
            parents.insert(node.parent);
        }
    }
    std::vector<int> leaves;
    for (const TaxonomyNode& node : nodes) {
        if (parents.count(node.id) == 0) {
            leaves.push_back(node.id);
        }
    }
    std::sort(leaves.begin(), leaves.end());
    return leaves;
}

const std::vector<IngredientEntry>* IngredientTable::find(int class_id) const {
    for (const auto& [id, entries] : classes) {
        if (id == class_id) {
            return &entries;
        }
    }
    return nullptr;
}

Matrix build_knowledge_adjacency(const IngredientTable& ingredients,
                                 const std::vector<int>& class_ids) {
    const Eigen::Index n = static_cast<Eigen::Index>(class_ids.size());
    if (n < 1) {
        throw InputError("knowledge adjacency needs at least one class");
    }
    const std::set<std::string> vocab(ingredients.groups.begin(), ingredients.groups.end());
    std::vector<const std::vector<IngredientEntry>*> lists(class_ids.size());
    static const std::vector<IngredientEntry> kEmpty;
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        const auto* entries = ingredients.find(class_ids[i]);
        lists[i] = entries ? entries : &kEmpty;
        for (const IngredientEntry& entry : *lists[i]) {
            if (vocab.count(entry.group) == 0) {
                throw InputError("class " + std::to_string(class_ids[i]) +
                                 ": undeclared ingredient group '" + entry.group + "'");
            }
        }
    }
    Matrix A = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, i) = static_cast<double>(lists[static_cast<std::size_t>(i)]->size());
        for (Eigen::Index j = i + 1; j < n; ++j) {
            int shared = 0;
            for (const IngredientEntry& a : *lists[static_cast<std::size_t>(i)]) {
                for (const IngredientEntry& b : *lists[static_cast<std::size_t>(j)]) {
                    if (a.ingredient == b.ingredient && a.group == b.group) {
                        ++shared;
                    }
                }
            }
            A(i, j) = shared;
            A(j, i) = shared;
        }
    }
    return A;
}

Matrix build_hyperclass_adjacency(const ClassTaxonomy& taxonomy,
                                  const std::vector<int>& class_ids) {
    taxonomy.validate();
    std::map<int, const TaxonomyNode*> by_id;
    for (const TaxonomyNode& node : taxonomy.nodes) {
        by_id.emplace(node.id, &node);
    }
    // Root-to-leaf ancestor chains, indexed by level.
    std::vector<std::vector<int>> paths(class_ids.size());
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        auto it = by_id.find(class_ids[i]);
        if (it == by_id.end()) {
            throw InputError("class " + std::to_string(class_ids[i]) + " missing from taxonomy");
        }
        const TaxonomyNode* node = it->second;
        if (node->level != taxonomy.levels) {
            throw InputError("class " + std::to_string(class_ids[i]) + " is not a leaf");
        }
        std::vector<int> chain;
        while (true) {
            chain.push_back(node->id);
            if (node->parent < 0) {
                break;
            }
            node = by_id.at(node->parent);
        }
        std::reverse(chain.begin(), chain.end());
        paths[i] = std::move(chain);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(class_ids.size());
    Matrix A = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, i) = taxonomy.levels;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& pi = paths[static_cast<std::size_t>(i)];
            const auto& pj = paths[static_cast<std::size_t>(j)];
            int level = 0;
            while (level + 1 < static_cast<int>(pi.size()) &&
                   level + 1 < static_cast<int>(pj.size()) &&
                   pi[static_cast<std::size_t>(level + 1)] ==
                       pj[static_cast<std::size_t>(level + 1)]) {
                ++level;
            }
            A(i, j) = level;  // 0 when only the root is shared
            A(j, i) = level;
        }
    }
    return A;
}

Matrix build_probability_adjacency(const CooccurrenceCounts& counts) {
    const Eigen::Index n = counts.O.rows();
    if (counts.O.cols() != n) {
        throw InputError("co-occurrence matrix is " + std::to_string(counts.O.rows()) + "x" +
                         std::to_string(counts.O.cols()) + ", expected square");
    }
    if (counts.T.size() != n) {
        throw InputError("occurrence vector length " + std::to_string(counts.T.size()) +
                         ", expected " + std::to_string(n));
    }
    if ((counts.O.array() < 0.0).any() || (counts.T.array() < 0.0).any()) {
        throw InputError("co-occurrence counts must be non-negative");
    }
    Matrix A = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (counts.T(i) == 0.0) {
            continue;
        }
        A.row(i) = counts.O.row(i) / counts.T(i);
    }
    return A;
}

Matrix normalize_and_quantize(const Matrix& raw, double tau) {
    if (tau < 0.0 || tau > 1.0) {
        throw ConfigError("quantization threshold " + std::to_string(tau) + " outside [0, 1]");
    }
    if ((raw.array() < 0.0).any()) {
        throw InputError("adjacency entries must be non-negative before quantization");
    }
    const double peak = raw.maxCoeff();
    Matrix scaled = peak > 0.0 ? Matrix(raw / peak) : Matrix::Zero(raw.rows(), raw.cols());
    Matrix logical(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index j = 0; j < raw.cols(); ++j) {
            logical(i, j) = scaled(i, j) >= tau ? 1.0 : 0.0;
        }
    }
    for (Eigen::Index i = 0; i < std::min(raw.rows(), raw.cols()); ++i) {
        logical(i, i) = 1.0;
    }
    return logical;
}

Matrix laplacian_normalize(const Matrix& A) {
    const Eigen::Index n = A.rows();
    Vector degree = A.rowwise().sum();
    Vector inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (degree(i) <= 0.0) {
            throw Error("laplacian_normalize: zero degree at node " + std::to_string(i));
        }
        inv_sqrt(i) = 1.0 / std::sqrt(degree(i));
    }
    return inv_sqrt.asDiagonal() * A * inv_sqrt.asDiagonal();
}

MultiSourceGraphSet build_graph_set(const IngredientTable& ingredients,
                                    const ClassTaxonomy& taxonomy,
                                    const CooccurrenceCounts& counts,
                                    const std::vector<int>& class_ids, double tau) {
    MultiSourceGraphSet set;
    set.n = static_cast<Eigen::Index>(class_ids.size());
    set.tau = tau;
    Matrix raw1 = ingredients.classes.empty()
                      ? Matrix::Zero(set.n, set.n)
                      : build_knowledge_adjacency(ingredients, class_ids);
    set.A1 = normalize_and_quantize(raw1, tau);
    set.A2 = normalize_and_quantize(build_hyperclass_adjacency(taxonomy, class_ids), tau);
    set.A3 = normalize_and_quantize(build_probability_adjacency(counts), tau);
    set.A1_hat = laplacian_normalize(set.A1);
    set.A2_hat = laplacian_normalize(set.A2);
    set.A3_hat = laplacian_normalize(set.A3);
    return set;
}

}  // namespace kefs
