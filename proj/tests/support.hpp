#pragma once

// Shared helpers for the test binaries: finite-difference gradient checks,
// random structure generators, and a scratch-directory guard.

#include "kefs/autodiff.hpp"
#include "kefs/common.hpp"
#include "kefs/evaluation.hpp"
#include "kefs/graphs.hpp"
#include "kefs/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace kefs::testsupport {

// Builds op(inputs), weights the output with a fixed random matrix so the
// scalar loss exercises every output entry, then compares the tape gradient
// of every input entry against central differences.
inline double fd_check_inputs(
    const std::function<ad::Id(ad::Tape&, const std::vector<ad::Id>&)>& build,
    std::vector<Matrix> inputs, Rng& rng, double h = 1e-6) {
    ad::Tape tape;
    std::vector<ad::Id> ids;
    ids.reserve(inputs.size());
    for (const auto& m : inputs) ids.push_back(tape.leaf(m, true));
    ad::Id out = build(tape, ids);
    Matrix w = rng.normal_matrix(tape.value(out).rows(), tape.value(out).cols());
    ad::Id loss = ad::sum_all(tape, ad::hadamard(tape, out, tape.constant(w)));
    tape.backward(loss);

    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
            for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
                auto eval = [&](double delta) {
                    std::vector<Matrix> pert = inputs;
                    pert[k](i, j) += delta;
                    ad::Tape t2;
                    std::vector<ad::Id> ids2;
                    for (const auto& m : pert) ids2.push_back(t2.leaf(m, false));
                    return (t2.value(build(t2, ids2)).array() * w.array()).sum();
                };
                const double fd = (eval(h) - eval(-h)) / (2 * h);
                const double an = tape.grad(ids[k])(i, j);
                const double err =
                    std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

// Same idea for a named parameter set: the builder must produce a 1x1 loss
// from the bound handles. Every entry of every parameter whose name passes
// the filter is perturbed.
inline double fd_check_params(
    ParameterSet& params,
    const std::function<ad::Id(ad::Tape&, const BoundParams&)>& build_loss,
    const std::function<bool(const std::string&)>& filter =
        [](const std::string&) { return true; },
    double h = 1e-6) {
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params, true);
    ad::Id loss = build_loss(tape, bound);
    tape.backward(loss);

    auto eval = [&]() {
        ad::Tape t2;
        BoundParams b2 = bind_params(t2, params, false);
        return t2.value(build_loss(t2, b2))(0, 0);
    };

    double worst = 0;
    for (auto& [name, value] : params.entries()) {
        if (!filter(name)) continue;
        const Matrix analytic = tape.grad(bound.id(name));
        for (Eigen::Index i = 0; i < value.rows(); ++i) {
            for (Eigen::Index j = 0; j < value.cols(); ++j) {
                const double keep = value(i, j);
                value(i, j) = keep + h;
                const double up = eval();
                value(i, j) = keep - h;
                const double down = eval();
                value(i, j) = keep;
                const double fd = (up - down) / (2 * h);
                const double an = analytic(i, j);
                const double err =
                    std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

// Random class taxonomy: root at level 0, `leaves` classes at the deepest
// level, every node parented to a random node one level up.
inline ClassTaxonomy random_taxonomy(Rng& rng, int leaves, int levels) {
    ClassTaxonomy tax;
    tax.levels = levels;
    int next_id = 0;
    std::vector<std::vector<int>> by_level(static_cast<std::size_t>(levels) + 1);
    by_level[0].push_back(next_id);
    tax.nodes.push_back({next_id++, -1, 0});
    for (int level = 1; level <= levels; ++level) {
        const auto& ups = by_level[static_cast<std::size_t>(level) - 1];
        int count = level == levels ? leaves : 1 + static_cast<int>(rng.uniform() * 3.0);
        // every internal node needs a child or validate() flags it as a
        // misplaced leaf, so the first children go round-robin over parents
        count = std::max(count, static_cast<int>(ups.size()));
        if (level < levels) count = std::min(count, leaves);
        for (int k = 0; k < count; ++k) {
            const int parent =
                k < static_cast<int>(ups.size())
                    ? ups[static_cast<std::size_t>(k)]
                    : ups[static_cast<std::size_t>(rng.uniform() * ups.size()) % ups.size()];
            by_level[static_cast<std::size_t>(level)].push_back(next_id);
            tax.nodes.push_back({next_id++, parent, level});
        }
    }
    return tax;
}

// Level of the deepest common ancestor of two leaves, walked by hand.
// Sharing only the root gives 0; a leaf against itself gives tax.levels.
inline int lca_level(const ClassTaxonomy& tax, int a, int b) {
    auto chain = [&](int id) {
        std::vector<int> out;
        while (id >= 0) {
            out.push_back(id);
            const TaxonomyNode* node = nullptr;
            for (const auto& n : tax.nodes)
                if (n.id == id) node = &n;
            id = node->parent;
        }
        return out;
    };
    const std::vector<int> ca = chain(a);
    const std::vector<int> cb = chain(b);
    for (int id : ca) {
        if (std::find(cb.begin(), cb.end(), id) == cb.end()) continue;
        for (const auto& n : tax.nodes)
            if (n.id == id) return n.level;
    }
    return 0;
}

// Random detections and ground truth over `images` images and `classes`
// class ids, with boxes loosely clustered so some pairs overlap.
inline void random_detection_instance(Rng& rng, int images, int classes, int max_gt,
                                      int max_det, std::vector<GroundTruth>& gts,
                                      std::vector<Detection>& dets) {
    gts.clear();
    dets.clear();
    auto box = [&]() {
        Box b;
        b.x1 = rng.uniform() * 80.0;
        b.y1 = rng.uniform() * 80.0;
        b.x2 = b.x1 + 4.0 + rng.uniform() * 30.0;
        b.y2 = b.y1 + 4.0 + rng.uniform() * 30.0;
        return b;
    };
    for (int img = 0; img < images; ++img) {
        const int n_gt = static_cast<int>(rng.uniform() * (max_gt + 1));
        for (int g = 0; g < n_gt; ++g) {
            GroundTruth gt;
            gt.image_id = img;
            gt.class_id = static_cast<int>(rng.uniform() * classes);
            gt.box = box();
            gts.push_back(gt);
        }
        const int n_det = static_cast<int>(rng.uniform() * (max_det + 1));
        for (int d = 0; d < n_det; ++d) {
            Detection det;
            det.image_id = img;
            det.class_id = static_cast<int>(rng.uniform() * classes);
            det.score = rng.uniform();
            if (!gts.empty() && rng.uniform() < 0.6) {
                const auto& base = gts[static_cast<std::size_t>(rng.uniform() * gts.size()) %
                                       gts.size()];
                det.image_id = base.image_id;
                det.class_id = base.class_id;
                det.box = base.box;
                det.box.x1 += (rng.uniform() - 0.5) * 8.0;
                det.box.y1 += (rng.uniform() - 0.5) * 8.0;
                det.box.x2 += (rng.uniform() - 0.5) * 8.0;
                det.box.y2 += (rng.uniform() - 0.5) * 8.0;
                if (det.box.x2 <= det.box.x1) det.box.x2 = det.box.x1 + 1.0;
                if (det.box.y2 <= det.box.y1) det.box.y2 = det.box.y1 + 1.0;
            } else {
                det.box = box();
            }
            dets.push_back(det);
        }
    }
}

// True when fn throws E and the message contains `needle`.
template <typename E, typename Fn>
bool throws_containing(Fn&& fn, const std::string& needle) {
    try {
        fn();
    } catch (const E& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    } catch (...) {
        return false;
    }
    return false;
}

// Creates a unique scratch directory and removes it on destruction.
class ScratchDir {
  public:
    explicit ScratchDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("kefs_test_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string dir() const { return path_.string(); }

  private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

}  // namespace kefs::testsupport
