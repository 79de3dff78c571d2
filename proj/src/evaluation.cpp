#include "kefs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

namespace kefs {

void validate_box(const Box& box) {
    if (!(box.x2 > box.x1) || !(box.y2 > box.y1)) {
        throw InputError("degenerate box [" + std::to_string(box.x1) + ", " +
                         std::to_string(box.y1) + ", " + std::to_string(box.x2) + ", " +
                         std::to_string(box.y2) + "]");
    }
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    const double uni = area_a + area_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

// Detection order for greedy matching: descending score, input order on ties.
std::vector<std::size_t> score_order(const std::vector<Detection>& dets,
                                     const std::vector<std::size_t>& subset) {
    std::vector<std::size_t> order = subset;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    return order;
}

// Greedily matches ordered detections to unmatched ground truths of the same
// image; returns per-detection hit flags and the number of matched GTs.
std::pair<std::vector<bool>, int> greedy_match(const std::vector<Detection>& dets,
                                               const std::vector<std::size_t>& order,
                                               const std::vector<GroundTruth>& gts,
                                               const std::vector<std::size_t>& gt_subset,
                                               double iou_thresh) {
    std::vector<bool> hit(order.size(), false);
    std::vector<bool> taken(gts.size(), false);
    int matched = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const Detection& det = dets[order[rank]];
        double best = 0.0;
        std::size_t best_gt = gts.size();
        for (std::size_t gi : gt_subset) {
            const GroundTruth& gt = gts[gi];
            if (taken[gi] || gt.image_id != det.image_id || gt.class_id != det.class_id) {
                continue;
            }
            const double overlap = iou(det.box, gt.box);
            if (overlap > best) {
                best = overlap;
                best_gt = gi;
            }
        }
        if (best_gt < gts.size() && best >= iou_thresh) {
            taken[best_gt] = true;
            hit[rank] = true;
            ++matched;
        }
    }
    return {hit, matched};
}

}  // namespace

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts, int class_id,
                         double iou_thresh) {
    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].class_id == class_id) {
            det_idx.push_back(i);
        }
    }
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (gts[i].class_id == class_id) {
            gt_idx.push_back(i);
        }
    }
    if (gt_idx.empty()) {
        return 0.0;
    }
    const std::vector<std::size_t> order = score_order(dets, det_idx);
    const auto [hit, matched] = greedy_match(dets, order, gts, gt_idx, iou_thresh);
    const double npos = static_cast<double>(gt_idx.size());
    std::vector<double> precision(order.size()), recall(order.size());
    int tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        tp += hit[i] ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / npos;
    }
    // Precision envelope from the right, then area over recall increments.
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

double mean_average_precision(const std::vector<Detection>& dets,
                              const std::vector<GroundTruth>& gts,
                              const std::vector<int>& class_set, double iou_thresh) {
    if (class_set.empty()) {
        throw InputError("mean average precision needs a nonempty class set");
    }
    double sum = 0.0;
    int counted = 0;
    for (int c : class_set) {
        bool has_gt = false;
        for (const GroundTruth& gt : gts) {
            if (gt.class_id == c) {
                has_gt = true;
                break;
            }
        }
        if (!has_gt) {
            continue;
        }
        sum += average_precision(dets, gts, c, iou_thresh);
        ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
}

double recall_at_k(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                   int k, double iou_thresh) {
    if (k < 1) {
        throw ConfigError("recall cutoff must be >= 1, got " + std::to_string(k));
    }
    if (gts.empty()) {
        return 0.0;
    }
    std::map<int, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        by_image[dets[i].image_id].push_back(i);
    }
    std::vector<std::size_t> kept;
    for (auto& [image, idx] : by_image) {
        std::vector<std::size_t> order = score_order(dets, idx);
        if (order.size() > static_cast<std::size_t>(k)) {
            order.resize(static_cast<std::size_t>(k));
        }
        kept.insert(kept.end(), order.begin(), order.end());
    }
    std::vector<std::size_t> gt_idx(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
        gt_idx[i] = i;
    }
    const std::vector<std::size_t> order = score_order(dets, kept);
    const auto [hit, matched] = greedy_match(dets, order, gts, gt_idx, iou_thresh);
    return static_cast<double>(matched) / static_cast<double>(gts.size());
}

double harmonic_mean(double seen, double unseen) {
    if (seen < 0.0 || unseen < 0.0) {
        throw InputError("harmonic mean inputs must be non-negative, got " +
                         std::to_string(seen) + ", " + std::to_string(unseen));
    }
    const double sum = seen + unseen;
    return sum > 0.0 ? 2.0 * seen * unseen / sum : 0.0;
}

double classification_accuracy(const LinearClassifier& classifier,
                               const RegionFeatureSet& features) {
    if (features.records.empty()) {
        throw InputError("accuracy needs at least one feature");
    }
    const std::set<int> known(classifier.class_ids.begin(), classifier.class_ids.end());
    int correct = 0;
    for (const RegionRecord& r : features.records) {
        if (known.count(r.class_id) == 0) {
            throw InputError("feature labeled with class " + std::to_string(r.class_id) +
                             " unknown to the classifier");
        }
        if (classifier.predict(r.feature) == r.class_id) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(features.records.size());
}

double silhouette(const RegionFeatureSet& features) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < features.records.size(); ++i) {
        by_class[features.records[i].class_id].push_back(i);
    }
    if (by_class.size() < 2) {
        throw InputError("silhouette needs >= 2 classes, got " +
                         std::to_string(by_class.size()));
    }
    const auto& recs = features.records;
    auto dist = [&](std::size_t i, std::size_t j) {
        return (recs[i].feature - recs[j].feature).norm();
    };
    double total = 0.0;
    for (const auto& [cls, members] : by_class) {
        for (std::size_t i : members) {
            if (members.size() < 2) {
                continue;  // singleton contributes 0
            }
            double intra = 0.0;
            for (std::size_t j : members) {
                if (j != i) {
                    intra += dist(i, j);
                }
            }
            intra /= static_cast<double>(members.size() - 1);
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& [other, other_members] : by_class) {
                if (other == cls) {
                    continue;
                }
                double inter = 0.0;
                for (std::size_t j : other_members) {
                    inter += dist(i, j);
                }
                inter /= static_cast<double>(other_members.size());
                nearest = std::min(nearest, inter);
            }
            const double denom = std::max(intra, nearest);
            total += denom > 0.0 ? (nearest - intra) / denom : 0.0;
        }
    }
    return total / static_cast<double>(recs.size());
}

DetectionEvalResult evaluate_detections(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts,
                                        const std::vector<int>& seen_ids,
                                        const std::vector<int>& unseen_ids, double iou_thresh,
                                        int k) {
    std::set<int> classes;
    for (const GroundTruth& gt : gts) {
        classes.insert(gt.class_id);
    }
    DetectionEvalResult result;
    result.iou_thresh = iou_thresh;
    result.k = k;
    for (int c : classes) {
        result.per_class_ap.emplace_back(c, average_precision(dets, gts, c, iou_thresh));
    }
    auto subset_map = [&](const std::vector<int>& subset) {
        double sum = 0.0;
        int counted = 0;
        for (int c : subset) {
            if (classes.count(c) == 0) {
                continue;
            }
            for (const auto& [cls, ap] : result.per_class_ap) {
                if (cls == c) {
                    sum += ap;
                    ++counted;
                    break;
                }
            }
        }
        return counted > 0 ? sum / counted : 0.0;
    };
    double all_sum = 0.0;
    for (const auto& [cls, ap] : result.per_class_ap) {
        all_sum += ap;
    }
    result.map_all =
        result.per_class_ap.empty() ? 0.0 : all_sum / static_cast<double>(result.per_class_ap.size());
    result.map_seen = subset_map(seen_ids);
    result.map_unseen = subset_map(unseen_ids);
    result.hm = harmonic_mean(result.map_seen, result.map_unseen);
    result.recall = recall_at_k(dets, gts, k, iou_thresh);
    return result;
}

}  // namespace kefs
