#pragma once

// Shared data records: per-class semantic vectors and labeled region features.
// Classes are kept sorted by ascending id; every matrix whose rows correspond
// to classes uses that order.

#include "kefs/common.hpp"

#include <string>
#include <vector>

namespace kefs {

struct ClassEntry {
    int id = 0;
    std::string name;
    bool seen = true;
    Vector word_vec;
    Vector attr_vec;
};

struct SemanticTable {
    std::vector<ClassEntry> classes;

    Eigen::Index count() const { return static_cast<Eigen::Index>(classes.size()); }
    Eigen::Index word_dim() const;
    Eigen::Index attr_dim() const;

    // Throws InputError on duplicate ids, dimension disagreements, or
    // non-finite vectors; sorts classes by id.
    void validate_and_sort();

    Matrix word_matrix() const;  // n x d_w
    Matrix attr_matrix() const;  // n x d_a

    std::vector<int> class_ids() const;
    std::vector<int> seen_ids() const;
    std::vector<int> unseen_ids() const;

    // Row index for a class id; throws InputError when absent.
    Eigen::Index index_of(int class_id) const;
};

struct RegionRecord {
    int class_id = 0;
    Vector feature;
    bool synthesized = false;
};

struct RegionFeatureSet {
    std::vector<RegionRecord> records;

    Eigen::Index dim() const;
    // Throws InputError on inconsistent dimensions or labels absent from the
    // semantic table.
    void validate(const SemanticTable& semantics) const;
};

}  // namespace kefs
