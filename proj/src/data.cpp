#include "kefs/data.hpp"

#include <algorithm>
#include <set>

namespace kefs {

Eigen::Index SemanticTable::word_dim() const {
    return classes.empty() ? 0 : classes.front().word_vec.size();
}

Eigen::Index SemanticTable::attr_dim() const {
    return classes.empty() ? 0 : classes.front().attr_vec.size();
}

void SemanticTable::validate_and_sort() {
    if (classes.empty()) {
        throw InputError("semantic table has no classes");
    }
    std::sort(classes.begin(), classes.end(),
              [](const ClassEntry& a, const ClassEntry& b) { return a.id < b.id; });
    std::set<int> ids;
    const Eigen::Index dw = classes.front().word_vec.size();
    const Eigen::Index da = classes.front().attr_vec.size();
    for (const ClassEntry& c : classes) {
        if (!ids.insert(c.id).second) {
            throw InputError("duplicate class id " + std::to_string(c.id));
        }
        if (c.word_vec.size() != dw) {
            throw InputError("class " + std::to_string(c.id) + ": word vector length " +
                             std::to_string(c.word_vec.size()) + ", expected " +
                             std::to_string(dw));
        }
        if (c.attr_vec.size() != da) {
            throw InputError("class " + std::to_string(c.id) + ": attribute vector length " +
                             std::to_string(c.attr_vec.size()) + ", expected " +
                             std::to_string(da));
        }
        if (!c.word_vec.allFinite() || !c.attr_vec.allFinite()) {
            throw InputError("class " + std::to_string(c.id) + ": non-finite semantic vector");
        }
    }
}

Matrix SemanticTable::word_matrix() const {
    Matrix m(count(), word_dim());
    for (Eigen::Index i = 0; i < count(); ++i) {
        m.row(i) = classes[static_cast<std::size_t>(i)].word_vec.transpose();
    }
    return m;
}

Matrix SemanticTable::attr_matrix() const {
    Matrix m(count(), attr_dim());
    for (Eigen::Index i = 0; i < count(); ++i) {
        m.row(i) = classes[static_cast<std::size_t>(i)].attr_vec.transpose();
    }
    return m;
}

std::vector<int> SemanticTable::class_ids() const {
    std::vector<int> ids;
    ids.reserve(classes.size());
    for (const ClassEntry& c : classes) {
        ids.push_back(c.id);
    }
    return ids;
}

std::vector<int> SemanticTable::seen_ids() const {
    std::vector<int> ids;
    for (const ClassEntry& c : classes) {
        if (c.seen) {
            ids.push_back(c.id);
        }
    }
    return ids;
}

std::vector<int> SemanticTable::unseen_ids() const {
    std::vector<int> ids;
    for (const ClassEntry& c : classes) {
        if (!c.seen) {
            ids.push_back(c.id);
        }
    }
    return ids;
}

Eigen::Index SemanticTable::index_of(int class_id) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].id == class_id) {
            return static_cast<Eigen::Index>(i);
        }
    }
    throw InputError("unknown class id " + std::to_string(class_id));
}

Eigen::Index RegionFeatureSet::dim() const {
    return records.empty() ? 0 : records.front().feature.size();
}

void RegionFeatureSet::validate(const SemanticTable& semantics) const {
    const Eigen::Index a = dim();
    for (const RegionRecord& r : records) {
        if (r.feature.size() != a) {
            throw InputError("region feature length " + std::to_string(r.feature.size()) +
                             ", expected " + std::to_string(a));
        }
        if (!r.feature.allFinite()) {
            throw InputError("non-finite region feature for class " +
                             std::to_string(r.class_id));
        }
        semantics.index_of(r.class_id);
    }
}

}  // namespace kefs
