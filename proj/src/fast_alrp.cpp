#include "rankloss/fast_alrp.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "rankloss/errors.hpp"

namespace rankloss {

double prune_threshold(const Scenario& scenario, const StepKind& step) {
    double lowest = 0.0;
    bool any = false;
    for (const AnchorRecord& a : scenario.anchors) {
        if (a.label != AnchorLabel::Positive) continue;
        lowest = any ? std::min(lowest, a.score) : a.score;
        any = true;
    }
    if (!any) throw ValidationError("prune_threshold: scenario has no positives");
    return step.is_exact() ? lowest : lowest - step.delta;
}

LossBreakdown fast_alrp(const Scenario& scenario, const FastConfig& config, const SelfBalancer* balancer,
                        FastStats* stats) {
    scenario.validate(true);
    const StepKind& step_kind = config.step;
    if (!step_kind.is_exact() && !(step_kind.delta > 0.0)) throw ValidationError("fast_alrp: delta must be positive");

    std::vector<std::size_t> pos = scenario.positives();
    if (pos.empty()) throw ValidationError("fast_alrp: scenario has no positives");
    const std::size_t np = pos.size();
    const auto& anchors = scenario.anchors;

    FastStats counters;

    // Part 1: relevant negatives.
    const double threshold = prune_threshold(scenario, step_kind);
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].label != AnchorLabel::Negative) continue;
        ++counters.pair_ops;
        if (!config.prune || anchors[i].score >= threshold) neg.push_back(i);
    }
    counters.relevant_negatives = neg.size();

    // Part 2: localisation errors, sorted by score, cumulated over tie groups
    // so that equal scores see each other (exact step has H(0) = 1).
    std::stable_sort(pos.begin(), pos.end(),
                     [&](std::size_t a, std::size_t b) { return anchors[a].score > anchors[b].score; });
    std::vector<double> errors(np);
    for (std::size_t p = 0; p < np; ++p) {
        const AnchorRecord& a = anchors[pos[p]];
        errors[p] = loc_error(*a.pred_box, scenario.gts[a.gt_index], scenario.loc_kind);
    }
    // higher[k]: errors of the other positives scored at least as high as k.
    std::vector<double> higher(np);
    {
        double before_group = 0.0;
        std::size_t start = 0;
        while (start < np) {
            std::size_t end = start;
            while (end < np && anchors[pos[end]].score == anchors[pos[start]].score) ++end;
            for (std::size_t k = start; k < end; ++k) {
                double tied = 0.0;
                for (std::size_t m = start; m < end; ++m) {
                    if (m != k) tied += errors[m];
                }
                higher[k] = before_group + tied;
            }
            for (std::size_t k = start; k < end; ++k) before_group += errors[k];
            start = end;
        }
    }

    // Part 3: one pass over positives.
    std::vector<double> rank(np);
    std::vector<double> pos_grad(np, 0.0);
    std::vector<double> neg_grad(neg.size(), 0.0);
    std::vector<double> relation(neg.size());
    double cls_sum = 0.0;
    double loc_sum = 0.0;
    // Mass actually distributed onto negatives (positives with N_FP > 0).
    double primary_sum = 0.0;
    double target_sum = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        const double s_i = anchors[pos[p]].score;
        double rank_plus = 1.0;
        for (std::size_t q = 0; q < np; ++q) {
            if (q == p) continue;
            rank_plus += step(anchors[pos[q]].score - s_i, step_kind);
        }
        double n_fp = 0.0;
        for (std::size_t n = 0; n < neg.size(); ++n) {
            relation[n] = step(anchors[neg[n]].score - s_i, step_kind);
            n_fp += relation[n];
        }
        counters.pair_ops += (np - 1) + neg.size();

        rank[p] = rank_plus + n_fp;
        cls_sum += n_fp / rank[p];
        loc_sum += (errors[p] + higher[p]) / rank[p];

        if (n_fp > 0.0) {
            // Error that a perfect ranking would remove: N_FP(i) plus the
            // localisation errors of higher-scored positives.
            const double removable = (n_fp + higher[p]) / rank[p];
            pos_grad[p] = -removable;
            primary_sum += (n_fp + errors[p] + higher[p]) / rank[p];
            target_sum += errors[p] / rank[p];
            const double per_unit = removable / n_fp;
            for (std::size_t n = 0; n < neg.size(); ++n) neg_grad[n] += relation[n] * per_unit;
        }
    }

    // Part 4: normalise, box gradients, self-balance.
    const double z = static_cast<double>(np);
    LossBreakdown out;
    out.step = step_kind;
    out.normalizer = z;
    out.cls_component = cls_sum / z;
    out.loc_component = loc_sum / z;
    out.total = out.cls_component + out.loc_component;
    out.score_grads.assign(anchors.size(), 0.0);
    for (std::size_t p = 0; p < np; ++p) out.score_grads[pos[p]] = pos_grad[p] / z;
    for (std::size_t n = 0; n < neg.size(); ++n) out.score_grads[neg[n]] = neg_grad[n] / z;

    // Soft weight of positive m: 1/rank(m) plus 1/rank(i) of every positive it
    // outscores or ties, i.e. a suffix sum over the sorted order by tie group.
    std::vector<double> weights(np);
    {
        double suffix = 0.0;
        std::size_t end = np;
        while (end > 0) {
            std::size_t start = end;
            while (start > 0 && anchors[pos[start - 1]].score == anchors[pos[end - 1]].score) {
                suffix += 1.0 / rank[--start];
            }
            for (std::size_t k = start; k < end; ++k) weights[k] = suffix / z;
            end = start;
        }
    }

    const double sb = balancer ? balancer->active_weight() : 1.0;
    out.sb_weight_applied = sb;
    // Box gradients are reported in Scenario::positives() order.
    std::vector<std::size_t> slot(anchors.size(), 0);
    {
        const std::vector<std::size_t> natural = scenario.positives();
        for (std::size_t k = 0; k < natural.size(); ++k) slot[natural[k]] = k;
    }
    out.box_grads.assign(np, {0.0, 0.0, 0.0, 0.0});
    for (std::size_t p = 0; p < np; ++p) {
        const AnchorRecord& a = anchors[pos[p]];
        const LocErrorGrad g = loc_error_grad(*a.pred_box, scenario.gts[a.gt_index], scenario.loc_kind);
        out.nonsmooth_box_grad = out.nonsmooth_box_grad || g.nonsmooth;
        for (int k = 0; k < 4; ++k) out.box_grads[slot[pos[p]]][k] = sb * weights[p] * g.d[k];
    }

    out.primary_sum = primary_sum / z;
    out.target_sum = target_sum / z;

    if (stats) *stats = counters;
    return out;
}

namespace {

Scenario probe_scenario(const ProbeSize& size, std::mt19937_64& rng) {
    Scenario s;
    s.loc_kind = LocErrorKind::iou(0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> mixed(-1.0, 1.0);
    for (std::size_t p = 0; p < size.positives; ++p) {
        const double x = 10.0 * static_cast<double>(p);
        s.gts.push_back({x, 0.0, x + 1.0, 1.0});
        AnchorRecord a;
        a.label = AnchorLabel::Positive;
        a.gt_index = static_cast<int>(p);
        a.score = mixed(rng);
        // IoU between 0.55 and 1 via a vertical shrink.
        a.pred_box = Box{x, 0.0, x + 1.0, 0.55 + 0.45 * unit(rng)};
        s.anchors.push_back(a);
    }
    const auto prunable = static_cast<std::size_t>(size.prunable_fraction * static_cast<double>(size.negatives));
    for (std::size_t n = 0; n < size.negatives; ++n) {
        AnchorRecord a;
        a.label = AnchorLabel::Negative;
        // Positives live in [-1, 1]; with delta = 1 anything below -2 is out of reach.
        a.score = n < prunable ? -3.0 - unit(rng) : mixed(rng);
        s.anchors.push_back(a);
    }
    return s;
}

}  // namespace

std::vector<ComplexityRow> complexity_probe(const std::vector<ProbeSize>& sizes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ComplexityRow> rows;
    for (const ProbeSize& size : sizes) {
        if (size.positives == 0) throw ValidationError("complexity_probe: each size needs at least one positive");
        const Scenario s = probe_scenario(size, rng);
        FastStats st;
        const auto t0 = std::chrono::steady_clock::now();
        (void)fast_alrp(s, FastConfig{}, nullptr, &st);
        const auto t1 = std::chrono::steady_clock::now();

        ComplexityRow row;
        row.positives = size.positives;
        row.negatives = size.negatives;
        row.relevant_negatives = st.relevant_negatives;
        row.pair_ops = st.pair_ops;
        const double p = static_cast<double>(size.positives);
        row.model = static_cast<double>(size.negatives) +
                    p * std::max(p, static_cast<double>(st.relevant_negatives));
        row.seconds = std::chrono::duration<double>(t1 - t0).count();
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rankloss
