#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "rankloss/geometry.hpp"
#include "rankloss/ranking_core.hpp"

namespace rankloss {

struct Detection {
    double score = 0.0;
    Box box;
    int cls = 0;
};

struct GroundTruth {
    Box box;
    int cls = 0;
};

struct EvalInput {
    std::vector<Detection> detections;
    std::vector<GroundTruth> ground_truths;

    void validate() const;
};

/// Outcome of greedy matching at one IoU threshold. Detections are visited by
/// descending score (ties by input order); each takes the unmatched same-class
/// ground truth of highest IoU >= tau, lower index winning equal IoUs.
struct MatchResult {
    std::vector<std::size_t> order;     // detection indices, visiting order
    std::vector<int> matched_gt;        // per detection (input order), -1 if FP
    std::vector<double> matched_iou;    // per detection (input order), 0 if FP
};

MatchResult greedy_match(const EvalInput& input, double tau);

struct PRCurve {
    std::vector<double> recall_points;
    std::vector<double> interpolated_precision;  // one per recall point
    // Raw operating points, one per detection in visiting order.
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<std::size_t> tp;
    std::vector<std::size_t> fp;
    std::vector<std::size_t> fn;
};

/// 0.1, 0.2, ..., 1.0
std::vector<double> default_recall_points();
/// 0.00, 0.01, ..., 1.00
std::vector<double> coco_recall_points();
/// n evenly spaced points ending at 1: n = 10 gives the default set, n = 101 the COCO set.
std::vector<double> recall_points_for(std::size_t n);

/// Interpolated PR curve for one class, or all classes pooled when cls is empty.
PRCurve pr_curve(const EvalInput& input, double tau, const std::vector<double>& recall_points,
                 std::optional<int> cls = std::nullopt);

/// Mean interpolated precision at the recall points, averaged over the classes
/// that have ground truths.
double ap_at_iou(const EvalInput& input, double tau,
                 const std::vector<double>& recall_points = default_recall_points());

double mean_ap(const EvalInput& input, const std::vector<double>& taus,
               const std::vector<double>& recall_points = default_recall_points());

struct LRPResult {
    double total = 1.0;
    std::size_t n_tp = 0;
    std::size_t n_fp = 0;
    std::size_t n_fn = 0;
    double loc_error_sum = 0.0;
};

/// LRP over the detections scoring at least `score_threshold`.
LRPResult lrp_at(const EvalInput& input, double score_threshold, double tau = 0.5);

struct OLRPResult {
    double value = 1.0;
    std::optional<double> threshold;  // empty when no detection exists
    LRPResult at_best;
};

/// Minimum LRP over thresholds placed at the distinct detection scores;
/// among equal minima the highest threshold wins.
OLRPResult olrp(const EvalInput& input, double tau = 0.5);

struct ReferenceLosses {
    double ce = 0.0;
    double l1 = 0.0;
    double iou_loss = 0.0;
};

/// Cross-entropy over positives and negatives (scores read as probabilities),
/// and L1 / IoU losses over positives with each pair normalised so that the
/// ground truth becomes [0,0,1,1].
ReferenceLosses reference_losses(const Scenario& scenario);

/// Pearson correlation between the score ranking and the IoU ranking of the
/// positives (average ranks on ties).
double ranking_correlation(const Scenario& scenario);

/// IoU of each positive with its ground truth, Scenario::positives() order.
std::vector<double> positive_ious(const Scenario& scenario);

enum class RankingBound { Upper, Lower };

/// Re-deals the positives' predicted boxes, each expressed relative to its own
/// ground truth, so that the IoU ranking follows (Upper) or reverses (Lower)
/// the score ranking. The multiset of IoUs is unchanged.
Scenario ranking_bound_transform(const Scenario& scenario, RankingBound mode);

/// Detection set induced by a scenario: positives with their predicted boxes,
/// negatives with boxes that overlap no ground truth. Ignored anchors are dropped.
EvalInput induced_eval_input(const Scenario& scenario);

}  // namespace rankloss
