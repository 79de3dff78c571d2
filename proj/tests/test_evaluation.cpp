#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kefs/common.hpp"
#include "kefs/evaluation.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

using namespace kefs;
using testsupport::random_detection_instance;

namespace {

double iou_oracle(const Box& a, const Box& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    const double inter = w * h;
    const double u = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return inter / u;
}

// Stable descending-score order over a detection index subset.
std::vector<std::size_t> order_by_score(const std::vector<Detection>& dets,
                                        std::vector<std::size_t> subset) {
    std::stable_sort(subset.begin(), subset.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    return subset;
}

// Greedy one-to-one matching; each detection takes its best still-free ground
// truth of the same image and class when the overlap clears the threshold.
std::vector<bool> match_oracle(const std::vector<Detection>& dets,
                               const std::vector<std::size_t>& order,
                               const std::vector<GroundTruth>& gts, double thresh) {
    std::vector<bool> hit(order.size(), false);
    std::vector<bool> used(gts.size(), false);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const Detection& det = dets[order[r]];
        double best = 0.0;
        std::size_t pick = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].image_id != det.image_id ||
                gts[g].class_id != det.class_id) {
                continue;
            }
            const double o = iou_oracle(det.box, gts[g].box);
            if (o > best) {
                best = o;
                pick = g;
            }
        }
        if (pick < gts.size() && best >= thresh) {
            used[pick] = true;
            hit[r] = true;
        }
    }
    return hit;
}

// All-points interpolation written the slow way: every true positive earns
// 1/npos weighted by the best precision at or after its rank.
double ap_oracle(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                 int class_id, double thresh) {
    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].class_id == class_id) det_idx.push_back(i);
    }
    std::size_t npos = 0;
    std::vector<GroundTruth> class_gts;
    for (const GroundTruth& gt : gts) {
        if (gt.class_id == class_id) ++npos;
    }
    if (npos == 0) return 0.0;
    const std::vector<std::size_t> order = order_by_score(dets, det_idx);
    const std::vector<bool> hit = match_oracle(dets, order, gts, thresh);
    std::vector<double> prec_at(order.size());
    int tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        tp += hit[i] ? 1 : 0;
        prec_at[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    double ap = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!hit[i]) continue;
        double best = 0.0;
        for (std::size_t j = i; j < order.size(); ++j) best = std::max(best, prec_at[j]);
        ap += best / static_cast<double>(npos);
    }
    return ap;
}

double map_oracle(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                  const std::vector<int>& class_set, double thresh) {
    double sum = 0.0;
    int counted = 0;
    for (int c : class_set) {
        if (std::none_of(gts.begin(), gts.end(),
                         [&](const GroundTruth& g) { return g.class_id == c; })) {
            continue;
        }
        sum += ap_oracle(dets, gts, c, thresh);
        ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
}

double recall_oracle(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                     int k, double thresh) {
    if (gts.empty()) return 0.0;
    std::map<int, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < dets.size(); ++i) by_image[dets[i].image_id].push_back(i);
    std::vector<std::size_t> kept;
    for (auto& [img, idx] : by_image) {
        std::vector<std::size_t> order = order_by_score(dets, idx);
        if (order.size() > static_cast<std::size_t>(k)) order.resize(static_cast<std::size_t>(k));
        kept.insert(kept.end(), order.begin(), order.end());
    }
    const std::vector<std::size_t> order = order_by_score(dets, kept);
    const std::vector<bool> hit = match_oracle(dets, order, gts, thresh);
    const auto matched = std::count(hit.begin(), hit.end(), true);
    return static_cast<double>(matched) / static_cast<double>(gts.size());
}

Box make_box(double x1, double y1, double x2, double y2) { return Box{x1, y1, x2, y2}; }

}  // namespace

TEST_CASE("intersection over union matches hand-computed cases") {
    const Box a = make_box(0, 0, 2, 2);
    CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(iou(a, make_box(3, 3, 5, 5)) == 0.0);
    CHECK(iou(a, make_box(1, 1, 3, 3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
    CHECK(iou(a, make_box(0, 0, 2, 1)) == doctest::Approx(0.5).epsilon(1e-14));
    // boxes touching at an edge share no area
    CHECK(iou(a, make_box(2, 0, 4, 2)) == 0.0);
}

TEST_CASE("box validation rejects degenerate rectangles") {
    CHECK_NOTHROW(validate_box(make_box(0, 0, 1, 1)));
    CHECK_THROWS_AS(validate_box(make_box(0, 0, 0, 1)), InputError);
    CHECK_THROWS_AS(validate_box(make_box(0, 0, 1, 0)), InputError);
    CHECK_THROWS_AS(validate_box(make_box(2, 0, 1, 1)), InputError);
}

TEST_CASE("average precision on curated cases") {
    std::vector<GroundTruth> gts = {{0, 1, make_box(0, 0, 10, 10)}};
    std::vector<Detection> dets = {{0, 1, make_box(0, 0, 10, 10), 0.9},
                                   {0, 1, make_box(50, 50, 60, 60), 0.8}};
    // true positive first: the false positive after full recall changes nothing
    CHECK(average_precision(dets, gts, 1, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
    // false positive first halves the interpolated precision
    dets[0].score = 0.7;
    CHECK(average_precision(dets, gts, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    // no ground truth for the class
    CHECK(average_precision(dets, gts, 2, 0.5) == 0.0);
    // second detection on an already matched object is a false positive
    std::vector<Detection> doubled = {{0, 1, make_box(0, 0, 10, 10), 0.9},
                                      {0, 1, make_box(0, 0, 10, 10), 0.8}};
    std::vector<GroundTruth> two = {{0, 1, make_box(0, 0, 10, 10)},
                                    {0, 1, make_box(100, 100, 110, 110)}};
    CHECK(average_precision(doubled, two, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("score ties resolve by input order") {
    std::vector<GroundTruth> gts = {{0, 1, make_box(0, 0, 10, 10)}};
    std::vector<Detection> dets = {{0, 1, make_box(0, 0, 10, 10), 0.5},
                                   {0, 1, make_box(90, 90, 99, 99), 0.5}};
    CHECK(recall_at_k(dets, gts, 1, 0.5) == doctest::Approx(1.0));
    std::swap(dets[0], dets[1]);
    CHECK(recall_at_k(dets, gts, 1, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("random instances agree with the brute-force evaluator") {
    Rng rng(601);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<GroundTruth> gts;
        std::vector<Detection> dets;
        const int classes = 1 + static_cast<int>(rng.uniform() * 4.0);
        random_detection_instance(rng, 3, classes, 6, 10, gts, dets);
        const double thresh = 0.25 + rng.uniform() * 0.5;
        std::vector<int> class_set;
        for (int c = 0; c < classes; ++c) class_set.push_back(c);

        for (int c = 0; c < classes; ++c) {
            const double got = average_precision(dets, gts, c, thresh);
            const double want = ap_oracle(dets, gts, c, thresh);
            CHECK(std::abs(got - want) < 1e-10);
        }
        CHECK(std::abs(mean_average_precision(dets, gts, class_set, thresh) -
                       map_oracle(dets, gts, class_set, thresh)) < 1e-10);
        const int k = 1 + static_cast<int>(rng.uniform() * 5.0);
        CHECK(std::abs(recall_at_k(dets, gts, k, thresh) -
                       recall_oracle(dets, gts, k, thresh)) < 1e-10);
    }
}

TEST_CASE("mean average precision skips classes without annotations") {
    std::vector<GroundTruth> gts = {{0, 1, make_box(0, 0, 10, 10)}};
    std::vector<Detection> dets = {{0, 1, make_box(0, 0, 10, 10), 0.9},
                                   {0, 7, make_box(0, 0, 10, 10), 0.8}};
    CHECK(mean_average_precision(dets, gts, {1, 7}, 0.5) == doctest::Approx(1.0));
    CHECK(mean_average_precision(dets, gts, {7}, 0.5) == 0.0);
    CHECK_THROWS_AS(mean_average_precision(dets, gts, {}, 0.5), InputError);
}

TEST_CASE("recall keeps only the top detections per image") {
    std::vector<GroundTruth> gts = {{0, 1, make_box(0, 0, 10, 10)},
                                    {1, 1, make_box(0, 0, 10, 10)}};
    std::vector<Detection> dets = {
        {0, 1, make_box(70, 70, 80, 80), 0.9},  // image 0 top score, misses
        {0, 1, make_box(0, 0, 10, 10), 0.8},    // would match but ranks second
        {1, 1, make_box(0, 0, 10, 10), 0.9},
    };
    CHECK(recall_at_k(dets, gts, 1, 0.5) == doctest::Approx(0.5));
    CHECK(recall_at_k(dets, gts, 2, 0.5) == doctest::Approx(1.0));
    CHECK(recall_at_k({}, gts, 3, 0.5) == 0.0);
    CHECK(recall_at_k(dets, {}, 3, 0.5) == 0.0);
    CHECK_THROWS_AS(recall_at_k(dets, gts, 0, 0.5), ConfigError);
}

TEST_CASE("harmonic mean reproduces published operating points") {
    auto rounded = [](double v) { return std::round(v * 10.0) / 10.0; };
    CHECK(rounded(harmonic_mean(82.7, 2.7)) == doctest::Approx(5.2));
    CHECK(rounded(harmonic_mean(82.8, 3.6)) == doctest::Approx(6.9));
    CHECK(rounded(harmonic_mean(86.6, 47.6)) == doctest::Approx(61.4));
    CHECK(harmonic_mean(0.0, 50.0) == 0.0);
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    CHECK(harmonic_mean(30.0, 30.0) == doctest::Approx(30.0).epsilon(1e-12));
    CHECK_THROWS_AS(harmonic_mean(-1.0, 5.0), InputError);
}

TEST_CASE("classification accuracy counts exact label hits") {
    LinearClassifier clf;
    clf.class_ids = {1, 2};
    clf.W = Matrix::Zero(1, 2);
    clf.W << 1.0, -1.0;
    clf.b = Matrix::Zero(1, 2);

    RegionFeatureSet set;
    for (double v : {1.0, 2.0, -1.0, -0.5}) {
        RegionRecord rec;
        rec.class_id = v > 0.0 ? 1 : 2;
        rec.feature = Vector::Constant(1, v);
        set.records.push_back(rec);
    }
    CHECK(classification_accuracy(clf, set) == doctest::Approx(1.0));
    set.records[0].class_id = 2;  // now mislabeled
    CHECK(classification_accuracy(clf, set) == doctest::Approx(0.75));

    RegionFeatureSet empty;
    CHECK_THROWS_AS(classification_accuracy(clf, empty), InputError);
    set.records[0].class_id = 9;
    CHECK_THROWS_AS(classification_accuracy(clf, set), InputError);
}

TEST_CASE("silhouette matches a pairwise-loop oracle on random clusters") {
    Rng rng(602);
    for (int trial = 0; trial < 20; ++trial) {
        RegionFeatureSet set;
        const int classes = 2 + static_cast<int>(rng.uniform() * 3.0);
        for (int c = 0; c < classes; ++c) {
            const int members = 1 + static_cast<int>(rng.uniform() * 6.0);
            for (int i = 0; i < members; ++i) {
                RegionRecord rec;
                rec.class_id = c;
                rec.feature = rng.normal_vector(3) + Vector::Constant(3, 3.0 * c);
                set.records.push_back(std::move(rec));
            }
        }
        const double got = silhouette(set);

        // oracle with a precomputed distance table
        const std::size_t m = set.records.size();
        Matrix d = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    (set.records[i].feature - set.records[j].feature).norm();
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const int ci = set.records[i].class_id;
            std::size_t own = 0;
            double a_sum = 0.0;
            std::map<int, std::pair<double, std::size_t>> others;
            for (std::size_t j = 0; j < m; ++j) {
                const int cj = set.records[j].class_id;
                if (cj == ci) {
                    ++own;
                    if (j != i)
                        a_sum += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                } else {
                    others[cj].first +=
                        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    ++others[cj].second;
                }
            }
            if (own < 2) continue;
            const double a = a_sum / static_cast<double>(own - 1);
            double b = std::numeric_limits<double>::infinity();
            for (const auto& [cls, acc] : others) {
                b = std::min(b, acc.first / static_cast<double>(acc.second));
            }
            const double denom = std::max(a, b);
            total += denom > 0.0 ? (b - a) / denom : 0.0;
        }
        CHECK(got == doctest::Approx(total / static_cast<double>(m)).epsilon(1e-12));
    }
}

TEST_CASE("silhouette behaves at the extremes") {
    RegionFeatureSet tight;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 3; ++i) {
            RegionRecord rec;
            rec.class_id = c;
            rec.feature = Vector::Constant(2, 100.0 * c) +
                          Vector::Constant(2, 0.001 * i);
            tight.records.push_back(rec);
        }
    }
    CHECK(silhouette(tight) > 0.99);

    RegionFeatureSet one_class;
    RegionRecord rec;
    rec.class_id = 0;
    rec.feature = Vector::Zero(2);
    one_class.records.push_back(rec);
    one_class.records.push_back(rec);
    CHECK_THROWS_AS(silhouette(one_class), InputError);

    // a remote singleton dilutes the mean but contributes zero itself and
    // never becomes anyone's nearest cluster
    RegionFeatureSet with_singleton = tight;
    RegionRecord lone;
    lone.class_id = 7;
    lone.feature = Vector::Constant(2, 1.0e6);
    with_singleton.records.push_back(lone);
    const double diluted = silhouette(with_singleton);
    CHECK(diluted == doctest::Approx(silhouette(tight) * 6.0 / 7.0).epsilon(1e-9));
}

TEST_CASE("detection scoreboard ties every aggregate to its parts") {
    Rng rng(603);
    std::vector<GroundTruth> gts;
    std::vector<Detection> dets;
    random_detection_instance(rng, 4, 5, 5, 8, gts, dets);
    const std::vector<int> seen = {0, 1, 2};
    const std::vector<int> unseen = {3, 4};
    const DetectionEvalResult res = evaluate_detections(dets, gts, seen, unseen, 0.5, 5);

    std::set<int> annotated;
    for (const GroundTruth& gt : gts) annotated.insert(gt.class_id);
    CHECK(res.per_class_ap.size() == annotated.size());
    double sum = 0.0;
    for (const auto& [cls, ap] : res.per_class_ap) {
        CHECK(annotated.count(cls) == 1);
        CHECK(ap == doctest::Approx(average_precision(dets, gts, cls, 0.5)).epsilon(1e-12));
        sum += ap;
    }
    CHECK(res.map_all ==
          doctest::Approx(sum / static_cast<double>(annotated.size())).epsilon(1e-12));
    CHECK(res.map_seen ==
          doctest::Approx(mean_average_precision(dets, gts, seen, 0.5)).epsilon(1e-12));
    CHECK(res.map_unseen ==
          doctest::Approx(mean_average_precision(dets, gts, unseen, 0.5)).epsilon(1e-12));
    CHECK(res.hm == doctest::Approx(harmonic_mean(res.map_seen, res.map_unseen)).epsilon(1e-12));
    CHECK(res.recall == doctest::Approx(recall_at_k(dets, gts, 5, 0.5)).epsilon(1e-12));
    CHECK(res.iou_thresh == 0.5);
    CHECK(res.k == 5);
}
