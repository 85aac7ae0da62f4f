#include "rankloss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "rankloss/errors.hpp"

namespace rankloss {

namespace {

// IoUs computed from stored boxes land a few ulps off the values they were
// built for; comparisons against tau and recall levels allow for that.
constexpr double kSlack = 1e-9;

std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    return order;
}

void require_tau(double tau, const char* who) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ValidationError(std::string(who) + ": IoU threshold must lie in (0,1)");
    }
}

std::size_t count_gts(const EvalInput& input, std::optional<int> cls) {
    if (!cls) return input.ground_truths.size();
    return static_cast<std::size_t>(std::count_if(input.ground_truths.begin(), input.ground_truths.end(),
                                                  [&](const GroundTruth& g) { return g.cls == *cls; }));
}

// Average ranks (1-based) with ties sharing the mean position.
std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<double> r(v.size());
    std::size_t start = 0;
    while (start < idx.size()) {
        std::size_t end = start;
        while (end < idx.size() && v[idx[end]] == v[idx[start]]) ++end;
        const double mean = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) r[idx[k]] = mean;
        start = end;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) {
        throw ValidationError("ranking_correlation: rankings are constant, correlation undefined");
    }
    return sab / std::sqrt(saa * sbb);
}

// Box in the frame where `gt` is the unit square.
Box to_unit_frame(const Box& b, const Box& gt) {
    const double w = gt.width();
    const double h = gt.height();
    if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("ground-truth box has zero width or height");
    return {(b.x1 - gt.x1) / w, (b.y1 - gt.y1) / h, (b.x2 - gt.x1) / w, (b.y2 - gt.y1) / h};
}

Box from_unit_frame(const Box& u, const Box& gt) {
    const double w = gt.width();
    const double h = gt.height();
    return {gt.x1 + u.x1 * w, gt.y1 + u.y1 * h, gt.x1 + u.x2 * w, gt.y1 + u.y2 * h};
}

}  // namespace

void EvalInput::validate() const {
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const Detection& d = detections[i];
        if (!std::isfinite(d.score)) {
            throw ValidationError("detections[" + std::to_string(i) + "].score: must be finite");
        }
        if (!d.box.valid()) throw ValidationError("detections[" + std::to_string(i) + "].box: invalid box");
    }
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
        if (!ground_truths[g].box.valid()) {
            throw ValidationError("ground_truths[" + std::to_string(g) + "].box: invalid box");
        }
    }
}

MatchResult greedy_match(const EvalInput& input, double tau) {
    input.validate();
    MatchResult m;
    m.order = score_order(input.detections);
    m.matched_gt.assign(input.detections.size(), -1);
    m.matched_iou.assign(input.detections.size(), 0.0);
    std::vector<bool> taken(input.ground_truths.size(), false);
    for (std::size_t d : m.order) {
        const Detection& det = input.detections[d];
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < input.ground_truths.size(); ++g) {
            const GroundTruth& gt = input.ground_truths[g];
            if (taken[g] || gt.cls != det.cls) continue;
            if (det.box.area() == 0.0 && gt.box.area() == 0.0) continue;
            const double o = iou(det.box, gt.box);
            if (o < tau - kSlack) continue;
            if (best < 0 || o > best_iou) {
                best = static_cast<int>(g);
                best_iou = o;
            }
        }
        if (best >= 0) {
            taken[best] = true;
            m.matched_gt[d] = best;
            m.matched_iou[d] = best_iou;
        }
    }
    return m;
}

std::vector<double> recall_points_for(std::size_t n) {
    if (n == 0) throw ValidationError("recall points: need at least one");
    std::vector<double> pts(n);
    if (n == 101) {
        for (std::size_t k = 0; k < n; ++k) pts[k] = static_cast<double>(k) / 100.0;
        return pts;
    }
    for (std::size_t k = 0; k < n; ++k) pts[k] = static_cast<double>(k + 1) / static_cast<double>(n);
    return pts;
}

std::vector<double> default_recall_points() { return recall_points_for(10); }
std::vector<double> coco_recall_points() { return recall_points_for(101); }

PRCurve pr_curve(const EvalInput& input, double tau, const std::vector<double>& recall_points,
                 std::optional<int> cls) {
    require_tau(tau, "pr_curve");
    const std::size_t n_gt = count_gts(input, cls);
    if (n_gt == 0) throw ValidationError("pr_curve: no ground truths to recall");
    const MatchResult m = greedy_match(input, tau);

    PRCurve c;
    c.recall_points = recall_points;
    std::size_t tp = 0, fp = 0;
    for (std::size_t d : m.order) {
        if (cls && input.detections[d].cls != *cls) continue;
        if (m.matched_gt[d] >= 0) ++tp; else ++fp;
        c.tp.push_back(tp);
        c.fp.push_back(fp);
        c.fn.push_back(n_gt - tp);
        c.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        c.recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }
    // Interpolated precision: best precision at any recall at least r.
    c.interpolated_precision.reserve(recall_points.size());
    for (double r : recall_points) {
        double best = 0.0;
        for (std::size_t k = 0; k < c.recall.size(); ++k) {
            if (c.recall[k] >= r - kSlack) best = std::max(best, c.precision[k]);
        }
        c.interpolated_precision.push_back(best);
    }
    return c;
}

double ap_at_iou(const EvalInput& input, double tau, const std::vector<double>& recall_points) {
    if (input.ground_truths.empty()) throw ValidationError("ap_at_iou: no ground truths");
    if (recall_points.empty()) throw ValidationError("ap_at_iou: no recall points");
    std::set<int> classes;
    for (const GroundTruth& g : input.ground_truths) classes.insert(g.cls);
    double sum = 0.0;
    for (int cls : classes) {
        const PRCurve c = pr_curve(input, tau, recall_points, cls);
        sum += std::accumulate(c.interpolated_precision.begin(), c.interpolated_precision.end(), 0.0) /
               static_cast<double>(recall_points.size());
    }
    return sum / static_cast<double>(classes.size());
}

double mean_ap(const EvalInput& input, const std::vector<double>& taus, const std::vector<double>& recall_points) {
    if (taus.empty()) throw ValidationError("mean_ap: no IoU thresholds");
    double sum = 0.0;
    for (double t : taus) sum += ap_at_iou(input, t, recall_points);
    return sum / static_cast<double>(taus.size());
}

LRPResult lrp_at(const EvalInput& input, double score_threshold, double tau) {
    require_tau(tau, "lrp_at");
    if (input.detections.empty() && input.ground_truths.empty()) {
        throw ValidationError("lrp_at: no detections and no ground truths");
    }
    EvalInput kept;
    kept.ground_truths = input.ground_truths;
    for (const Detection& d : input.detections) {
        if (d.score >= score_threshold) kept.detections.push_back(d);
    }
    const MatchResult m = greedy_match(kept, tau);

    LRPResult r;
    for (std::size_t d = 0; d < kept.detections.size(); ++d) {
        if (m.matched_gt[d] < 0) {
            ++r.n_fp;
            continue;
        }
        ++r.n_tp;
        r.loc_error_sum += std::clamp((1.0 - m.matched_iou[d]) / (1.0 - tau), 0.0, 1.0);
    }
    r.n_fn = kept.ground_truths.size() - r.n_tp;
    const double denom = static_cast<double>(r.n_tp + r.n_fp + r.n_fn);
    r.total = (static_cast<double>(r.n_fp + r.n_fn) + r.loc_error_sum) / denom;
    return r;
}

OLRPResult olrp(const EvalInput& input, double tau) {
    OLRPResult best;
    if (input.detections.empty()) {
        best.at_best = lrp_at(input, 0.0, tau);
        best.value = best.at_best.total;
        return best;
    }
    std::vector<double> scores;
    for (const Detection& d : input.detections) scores.push_back(d.score);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    // Highest threshold first; only a strict improvement moves the optimum.
    for (double s : scores) {
        const LRPResult r = lrp_at(input, s, tau);
        if (!best.threshold || r.total < best.value) {
            best.value = r.total;
            best.threshold = s;
            best.at_best = r;
        }
    }
    return best;
}

ReferenceLosses reference_losses(const Scenario& scenario) {
    scenario.validate(true);
    ReferenceLosses out;
    constexpr double kFloor = 1e-12;
    std::size_t n_cls = 0;
    for (std::size_t i = 0; i < scenario.anchors.size(); ++i) {
        const AnchorRecord& a = scenario.anchors[i];
        if (a.label == AnchorLabel::Ignored) continue;
        if (a.score < 0.0 || a.score > 1.0) {
            throw ValidationError("anchors[" + std::to_string(i) +
                                  "].score: cross-entropy needs a probability in [0,1]");
        }
        const double p = a.label == AnchorLabel::Positive ? a.score : 1.0 - a.score;
        out.ce -= std::log(std::max(p, kFloor));
        ++n_cls;
    }
    if (n_cls > 0) out.ce /= static_cast<double>(n_cls);

    const std::vector<std::size_t> pos = scenario.positives();
    for (std::size_t id : pos) {
        const AnchorRecord& a = scenario.anchors[id];
        const Box& gt = scenario.gts[a.gt_index];
        const Box u = to_unit_frame(*a.pred_box, gt);
        out.l1 += std::abs(u.x1) + std::abs(u.y1) + std::abs(u.x2 - 1.0) + std::abs(u.y2 - 1.0);
        out.iou_loss += 1.0 - iou(*a.pred_box, gt);
    }
    if (!pos.empty()) {
        out.l1 /= static_cast<double>(pos.size());
        out.iou_loss /= static_cast<double>(pos.size());
    }
    return out;
}

std::vector<double> positive_ious(const Scenario& scenario) {
    scenario.validate(true);
    std::vector<double> out;
    for (std::size_t id : scenario.positives()) {
        const AnchorRecord& a = scenario.anchors[id];
        out.push_back(iou(*a.pred_box, scenario.gts[a.gt_index]));
    }
    return out;
}

double ranking_correlation(const Scenario& scenario) {
    const std::vector<double> ious = positive_ious(scenario);
    if (ious.size() < 2) throw ValidationError("ranking_correlation: needs at least two positives");
    std::vector<double> scores;
    for (std::size_t id : scenario.positives()) scores.push_back(scenario.anchors[id].score);
    return pearson(average_ranks(scores), average_ranks(ious));
}

Scenario ranking_bound_transform(const Scenario& scenario, RankingBound mode) {
    scenario.validate(true);
    const std::vector<std::size_t> pos = scenario.positives();
    const std::vector<double> ious = positive_ious(scenario);

    // Positives by descending score, ties by anchor index.
    std::vector<std::size_t> by_score(pos.size());
    std::iota(by_score.begin(), by_score.end(), 0);
    std::stable_sort(by_score.begin(), by_score.end(), [&](std::size_t a, std::size_t b) {
        return scenario.anchors[pos[a]].score > scenario.anchors[pos[b]].score;
    });
    // Unit-frame boxes ordered by IoU, best first for Upper, worst first for Lower.
    std::vector<std::size_t> by_iou(pos.size());
    std::iota(by_iou.begin(), by_iou.end(), 0);
    std::stable_sort(by_iou.begin(), by_iou.end(), [&](std::size_t a, std::size_t b) {
        return mode == RankingBound::Upper ? ious[a] > ious[b] : ious[a] < ious[b];
    });

    Scenario out = scenario;
    for (std::size_t k = 0; k < pos.size(); ++k) {
        const AnchorRecord& src = scenario.anchors[pos[by_iou[k]]];
        const Box unit = to_unit_frame(*src.pred_box, scenario.gts[src.gt_index]);
        AnchorRecord& dst = out.anchors[pos[by_score[k]]];
        dst.pred_box = from_unit_frame(unit, scenario.gts[dst.gt_index]);
    }
    return out;
}

EvalInput induced_eval_input(const Scenario& scenario) {
    scenario.validate(true);
    EvalInput in;
    double far = 0.0;
    for (const Box& g : scenario.gts) {
        in.ground_truths.push_back({g, 0});
        far = std::max(far, g.x2);
    }
    far += 10.0;
    for (const AnchorRecord& a : scenario.anchors) {
        if (a.label == AnchorLabel::Positive) {
            in.detections.push_back({a.score, *a.pred_box, 0});
        } else if (a.label == AnchorLabel::Negative) {
            in.detections.push_back({a.score, Box{far, 0.0, far + 1.0, 1.0}, 0});
            far += 2.0;
        }
    }
    return in;
}

}  // namespace rankloss
