#pragma once

// Detection and classification scoring: IoU matching, per-class AP with
// all-points interpolation, Recall@k, harmonic mean, accuracy, silhouette.

#include "kefs/common.hpp"
#include "kefs/data.hpp"
#include "kefs/training.hpp"

#include <utility>
#include <vector>

namespace kefs {

struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
};

// Throws InputError on degenerate extents.
void validate_box(const Box& box);

struct GroundTruth {
    int image_id = 0;
    int class_id = 0;
    Box box;
};

struct Detection {
    int image_id = 0;
    int class_id = 0;
    Box box;
    double score = 0.0;
};

double iou(const Box& a, const Box& b);

// Greedy matching by descending score (ties keep input order) against the
// highest-IoU unmatched ground truth of the same image and class; area under
// the exact precision-recall staircase. Returns 0 when the class has no GT.
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<GroundTruth>& gts, int class_id, double iou_thresh);

// Unweighted mean AP over classes in `class_set` that have at least one GT.
double mean_average_precision(const std::vector<Detection>& dets,
                              const std::vector<GroundTruth>& gts,
                              const std::vector<int>& class_set, double iou_thresh);

// Keeps the top-k detections per image by score, then reports the fraction of
// ground-truth boxes matched at the IoU threshold.
double recall_at_k(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                   int k, double iou_thresh);

double harmonic_mean(double seen, double unseen);

double classification_accuracy(const LinearClassifier& classifier,
                               const RegionFeatureSet& features);

// Mean over samples of (b - a) / max(a, b); singleton classes contribute 0.
double silhouette(const RegionFeatureSet& features);

struct DetectionEvalResult {
    std::vector<std::pair<int, double>> per_class_ap;  // classes with >= 1 GT
    double map_all = 0.0;
    double map_seen = 0.0;
    double map_unseen = 0.0;
    double hm = 0.0;
    double recall = 0.0;
    int k = 100;
    double iou_thresh = 0.5;
};

// Seen and unseen mAP from one run combined by harmonic mean.
DetectionEvalResult evaluate_detections(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts,
                                        const std::vector<int>& seen_ids,
                                        const std::vector<int>& unseen_ids, double iou_thresh,
                                        int k);

}  // namespace kefs
