#include "rankloss/losses.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rankloss/errors.hpp"
#include "test_support.hpp"

namespace rankloss {
namespace {

using testing::fixture;
using testing::random_scenario;
using testing::rel_close;

AnchorRecord pos(double score, int gt, Box box) { return {AnchorLabel::Positive, gt, score, box}; }
AnchorRecord neg(double score) { return {AnchorLabel::Negative, -1, score, std::nullopt}; }

// Unit gt at x = 10k; the prediction shares its width and has height `top`,
// so IoU is top (top <= 1) or 1 / top.
void add_positive(Scenario& s, double score, double top) {
    const double x = 10.0 * static_cast<double>(s.gts.size());
    s.gts.push_back({x, 0, x + 1, 1});
    s.anchors.push_back(pos(score, static_cast<int>(s.gts.size()) - 1, {x, 0, x + 1, top}));
}

TEST(ApLoss, ToyScenario) {
    const LossBreakdown r = ap_loss(fixture("cr1"), StepKind::exact());
    EXPECT_NEAR(r.total, 0.36, 0.005);
    // AP Loss has zero targets, so the loss equals the positive gradient mass.
    EXPECT_NEAR(r.total, gradient_mass(fixture("cr1"), r.score_grads).positive, 1e-15);
}

TEST(ApLoss, PerfectRanking) {
    Scenario s;
    add_positive(s, 2.0, 0.7);
    add_positive(s, 1.5, 0.9);
    s.anchors.push_back(neg(1.0));
    s.anchors.push_back(neg(0.2));
    EXPECT_EQ(ap_loss(s, StepKind::exact()).total, 0.0);
}

TEST(LrpPerPositive, ToyScenarios) {
    const std::vector<double> cr1{0.10, 0.50, 0.70, 0.82};
    const std::vector<double> cr3{1.00, 0.90, 0.85, 0.82};
    const auto a = lrp_per_positive(fixture("cr1"), StepKind::exact());
    const auto c = lrp_per_positive(fixture("cr3"), StepKind::exact());
    for (std::size_t p = 0; p < 4; ++p) {
        EXPECT_NEAR(a[p], cr1[p], 1e-12);
        EXPECT_NEAR(c[p], cr3[p], 1e-12);
    }
}

TEST(LrpPerPositive, PerfectSinglePositive) {
    Scenario s;
    add_positive(s, 0.5, 1.0);
    EXPECT_EQ(lrp_per_positive(s, StepKind::exact())[0], 0.0);
}

TEST(AlrpLoss, ToyTotals) {
    const LossBreakdown r1 = alrp_loss(fixture("cr1"), StepKind::exact());
    const LossBreakdown r2 = alrp_loss(fixture("cr2"), StepKind::exact());
    const LossBreakdown r3 = alrp_loss(fixture("cr3"), StepKind::exact());
    EXPECT_NEAR(r1.total, 0.53, 1e-12);
    EXPECT_NEAR(r2.total, 0.6925, 1e-12);
    EXPECT_NEAR(r3.total, 0.8925, 1e-12);
    for (const LossBreakdown* r : {&r1, &r2, &r3}) {
        // Same ranking in all three, so the classification part is shared.
        EXPECT_NEAR(r->cls_component, (0.0 + 1.0 / 3 + 3.0 / 6 + 6.0 / 10) / 4, 1e-12);
        EXPECT_NEAR(r->total, r->cls_component + r->loc_component, 1e-12);
        EXPECT_GE(r->total, 0.0);
        EXPECT_LE(r->total, 1.0);
    }
}

TEST(AlrpLoss, PerfectRankingAndLocalisation) {
    Scenario s;
    add_positive(s, 2.0, 1.0);
    add_positive(s, 1.0, 1.0);
    s.anchors.push_back(neg(-2.0));
    const LossBreakdown r = alrp_loss(s, StepKind::smooth());
    EXPECT_EQ(r.total, 0.0);
    for (double g : r.score_grads) EXPECT_EQ(g, 0.0);
    for (const auto& b : r.box_grads) {
        for (double v : b) EXPECT_EQ(std::abs(v), 0.0);
    }
}

TEST(AlrpLoss, ClsComponentEqualsApLossValue) {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 20; ++t) {
        const Scenario s = random_scenario(rng, {.positives = 10, .negatives = 50});
        for (const StepKind& kind : {StepKind::exact(), StepKind::smooth()}) {
            const LossBreakdown a = alrp_loss(s, kind);
            const LossBreakdown ap = ap_loss(s, kind);
            EXPECT_NEAR(a.cls_component, ap.total, 1e-12);
            double diff = 0.0;
            for (std::size_t i = 0; i < s.anchors.size(); ++i) diff += std::abs(a.score_grads[i] - ap.score_grads[i]);
            EXPECT_GT(diff, 1e-6);
        }
    }
}

// Finite differences of loc_component wrt one box coordinate. Scores do not
// move, so rank and H stay frozen.
double fd_loc(Scenario s, std::size_t anchor, int k, double h) {
    auto up = s.anchors[anchor].pred_box->as_array();
    auto down = up;
    up[k] += h;
    down[k] -= h;
    s.anchors[anchor].pred_box = Box::from_array(up);
    const double lu = alrp_loss(s, StepKind::smooth()).loc_component;
    s.anchors[anchor].pred_box = Box::from_array(down);
    const double ld = alrp_loss(s, StepKind::smooth()).loc_component;
    return (lu - ld) / (2 * h);
}

TEST(AlrpLoss, BoxGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 10; ++t) {
        const Scenario s = random_scenario(rng, {.positives = 6, .negatives = 30});
        const LossBreakdown r = alrp_loss(s, StepKind::smooth());
        const auto ids = s.positives();
        for (std::size_t p = 0; p < ids.size(); ++p) {
            for (int k = 0; k < 4; ++k) {
                const double fd = fd_loc(s, ids[p], k, 1e-6);
                EXPECT_TRUE(rel_close(r.box_grads[p][k], fd, 1e-5, 1e-9)) << r.box_grads[p][k] << " vs " << fd;
            }
        }
    }
}

TEST(AlrpLoss, BalancerScalesBoxGradientsOnly) {
    std::mt19937_64 rng(47);
    const Scenario s = random_scenario(rng, {.positives = 5, .negatives = 20});
    const SelfBalancer b = SelfBalancer::with_weight(2.5);
    const LossBreakdown plain = alrp_loss(s, StepKind::smooth());
    const LossBreakdown scaled = alrp_loss(s, StepKind::smooth(), &b);
    EXPECT_EQ(scaled.sb_weight_applied, 2.5);
    EXPECT_EQ(plain.score_grads, scaled.score_grads);
    EXPECT_EQ(plain.total, scaled.total);
    for (std::size_t p = 0; p < plain.box_grads.size(); ++p) {
        for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(scaled.box_grads[p][k], 2.5 * plain.box_grads[p][k]);
    }
}

TEST(AlrpLoss, RejectsPositiveWithoutBox) {
    Scenario s = fixture("cr1");
    s.anchors[s.positives()[0]].pred_box.reset();
    EXPECT_THROW(alrp_loss(s, StepKind::exact()), ValidationError);
}

TEST(AlrpLoss, TotalDoesNotIncreaseWhenOneErrorDrops) {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        Scenario s = random_scenario(rng, {.positives = 6, .negatives = 25});
        const double before = alrp_loss(s, StepKind::exact()).total;
        const auto ids = s.positives();
        const std::size_t p = static_cast<std::size_t>(u(rng) * ids.size()) % ids.size();
        AnchorRecord& a = s.anchors[ids[p]];
        const Box& gt = s.gts[a.gt_index];
        const double e0 = loc_error(*a.pred_box, gt, s.loc_kind);
        // Pull every edge part of the way toward the gt.
        const double f = u(rng);
        const Box b = *a.pred_box;
        a.pred_box = Box{b.x1 + f * (gt.x1 - b.x1), b.y1 + f * (gt.y1 - b.y1), b.x2 + f * (gt.x2 - b.x2),
                         b.y2 + f * (gt.y2 - b.y2)};
        const double e1 = loc_error(*a.pred_box, gt, s.loc_kind);
        if (e1 >= e0) continue;
        EXPECT_LE(alrp_loss(s, StepKind::exact()).total, before + 1e-15);
    }
}

TEST(AlrpLoss, ScoreOrderedErrorsMinimiseLocComponent) {
    std::mt19937_64 rng(59);
    for (int t = 0; t < 50; ++t) {
        Scenario s = random_scenario(rng, {.positives = 8, .negatives = 30});
        // Same gt for everybody, so moving boxes between positives moves errors.
        for (Box& g : s.gts) g = {0, 0, 2, 2};
        std::vector<Box> boxes;
        for (std::size_t k = 0; k < s.positives().size(); ++k) {
            Box b;
            do {
                b = testing::jittered(s.gts[0], rng, 0.15);
            } while (iou(b, s.gts[0]) < 0.51);
            boxes.push_back(b);
        }
        const auto ids = s.positives();
        std::vector<std::size_t> by_score(ids.size());
        std::iota(by_score.begin(), by_score.end(), 0);
        std::sort(by_score.begin(), by_score.end(),
                  [&](std::size_t a, std::size_t b) { return s.anchors[ids[a]].score > s.anchors[ids[b]].score; });
        std::sort(boxes.begin(), boxes.end(),
                  [&](const Box& a, const Box& b) { return iou(a, s.gts[0]) > iou(b, s.gts[0]); });

        Scenario sorted = s;
        for (std::size_t r = 0; r < ids.size(); ++r) sorted.anchors[ids[by_score[r]]].pred_box = boxes[r];
        const double best = alrp_loss(sorted, StepKind::exact()).loc_component;

        for (int k = 0; k < 10; ++k) {
            std::shuffle(boxes.begin(), boxes.end(), rng);
            Scenario shuffled = s;
            for (std::size_t r = 0; r < ids.size(); ++r) shuffled.anchors[ids[r]].pred_box = boxes[r];
            EXPECT_LE(best, alrp_loss(shuffled, StepKind::exact()).loc_component + 1e-12);
        }
    }
}

TEST(SoftWeights, ReconstructLocComponent) {
    std::mt19937_64 rng(61);
    for (int t = 0; t < 30; ++t) {
        const Scenario s = random_scenario(rng, {.positives = 12, .negatives = 60});
        for (const StepKind& kind : {StepKind::exact(), StepKind::smooth()}) {
            const auto w = alrp_soft_weights(s, kind);
            const auto e = positive_loc_errors(s);
            double sum = 0.0;
            for (std::size_t p = 0; p < w.size(); ++p) sum += w[p] * e[p];
            EXPECT_NEAR(sum, alrp_loss(s, kind).loc_component, 1e-12);
        }
    }
}

TEST(SoftWeights, TopScoredPositiveWeighsMost) {
    const Scenario s = fixture("cr1");
    const auto w = alrp_soft_weights(s, StepKind::exact());
    const auto ids = s.positives();
    std::size_t top = 0;
    for (std::size_t p = 1; p < ids.size(); ++p) {
        if (s.anchors[ids[p]].score > s.anchors[ids[top]].score) top = p;
    }
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin()), top);
}

TEST(SoftWeights, SinglePositive) {
    Scenario s;
    add_positive(s, 0.5, 0.8);
    s.anchors.push_back(neg(0.9));
    s.anchors.push_back(neg(0.7));
    s.anchors.push_back(neg(0.1));
    EXPECT_DOUBLE_EQ(alrp_soft_weights(s, StepKind::exact())[0], 1.0 / 3.0);
}

TEST(NdcgLoss, PerfectRanking) {
    Scenario s;
    add_positive(s, 3.0, 0.7);
    add_positive(s, 2.0, 0.7);
    add_positive(s, 1.5, 0.7);
    s.anchors.push_back(neg(-1.0));
    s.anchors.push_back(neg(-2.0));
    EXPECT_NEAR(ndcg_loss(s, StepKind::exact()).total, 0.0, 1e-15);
}

TEST(NdcgLoss, OnePositiveOneNegative) {
    Scenario s;
    add_positive(s, 1.0, 0.7);
    s.anchors.push_back(neg(0.0));
    EXPECT_NEAR(ndcg_loss(s, StepKind::exact()).total, 0.0, 1e-15);
    s.anchors[1].score = 2.0;
    EXPECT_NEAR(ndcg_loss(s, StepKind::exact()).total, 1.0 - 1.0 / std::log2(3.0), 1e-15);
}

TEST(NdcgLoss, Balanced) {
    std::mt19937_64 rng(67);
    for (int t = 0; t < 20; ++t) {
        const Scenario s = random_scenario(rng, {.positives = 10, .negatives = 80});
        const LossBreakdown r = ndcg_loss(s, StepKind::smooth());
        const GradientMass m = gradient_mass(s, r.score_grads);
        EXPECT_TRUE(rel_close(m.positive, m.negative, 1e-9));
    }
}

TEST(SelfBalancer, StartsAtOne) {
    SelfBalancer b;
    EXPECT_EQ(b.active_weight(), 1.0);
    b.end_epoch();
    EXPECT_EQ(b.active_weight(), 1.0);
}

TEST(SelfBalancer, MeanRatioOfEpoch) {
    LossBreakdown r;
    r.total = 0.9;
    r.loc_component = 0.1;
    std::vector<LossBreakdown> epoch(5, r);
    const SelfBalancer b = self_balance_update(SelfBalancer{}, epoch);
    EXPECT_NEAR(b.active_weight(), 9.0, 1e-12);
}

TEST(SelfBalancer, WeightFixedWithinEpoch) {
    SelfBalancer b;
    LossBreakdown r;
    r.total = 0.5;
    r.loc_component = 0.25;
    b.observe(r);
    EXPECT_EQ(b.active_weight(), 1.0);
    b.end_epoch();
    EXPECT_DOUBLE_EQ(b.active_weight(), 2.0);
    EXPECT_THROW(SelfBalancer::with_weight(0.0), ValidationError);
}

TEST(SelfBalancer, NeverBelowOneOnRealReports) {
    std::mt19937_64 rng(71);
    SelfBalancer b;
    for (int epoch = 0; epoch < 10; ++epoch) {
        std::vector<LossBreakdown> reports;
        for (int k = 0; k < 3; ++k) {
            reports.push_back(alrp_loss(random_scenario(rng, {.positives = 5, .negatives = 20}), StepKind::smooth()));
        }
        b = self_balance_update(b, reports);
        EXPECT_GE(b.active_weight(), 1.0);
    }
}

TEST(WrongTarget, TwoClearedPositives) {
    Scenario s;
    // IoU 3/4, so E_loc = 1/2.
    add_positive(s, 3.0, 4.0 / 3.0);
    add_positive(s, 2.0, 4.0 / 3.0);
    s.anchors.push_back(neg(0.0));
    s.anchors.push_back(neg(-0.5));
    const auto e = positive_loc_errors(s);
    ASSERT_NEAR(e[0], 0.5, 1e-12);
    ASSERT_NEAR(e[1], 0.5, 1e-12);

    const LossBreakdown wrong = wrong_target_alrp(s, StepKind::smooth());
    const LossBreakdown right = alrp_loss(s, StepKind::smooth());
    const GradientMass mw = gradient_mass(s, wrong.score_grads);
    const GradientMass mr = gradient_mass(s, right.score_grads);
    // By hand: l1 = 0.5 / 1, l2 = (0.5 + 0.5) / 2, each pushed with weight 1/|P|.
    EXPECT_NEAR(mw.positive, 0.5, 1e-12);
    EXPECT_EQ(mw.negative, 0.0);
    EXPECT_EQ(mr.positive, 0.0);
    EXPECT_EQ(mr.negative, 0.0);
    EXPECT_EQ(wrong.total, right.total);
}

TEST(WrongTarget, NearPerfectRankingBreaksBalance) {
    Scenario s;
    add_positive(s, 3.0, 0.9);
    add_positive(s, 2.5, 0.7);
    add_positive(s, 0.2, 0.8);
    s.anchors.push_back(neg(0.5));
    s.anchors.push_back(neg(-1.0));
    const LossBreakdown r = wrong_target_alrp(s, StepKind::exact());
    const GradientMass m = gradient_mass(s, r.score_grads);
    EXPECT_GT(m.positive, m.negative);
    EXPECT_GT(m.negative, 0.0);
}

TEST(WrongTarget, MatchesCorrectTargetWithoutLocalisationError) {
    std::mt19937_64 rng(73);
    Scenario s = random_scenario(rng, {.positives = 8, .negatives = 40});
    for (std::size_t id : s.positives()) s.anchors[id].pred_box = s.gts[s.anchors[id].gt_index];
    const LossBreakdown a = alrp_loss(s, StepKind::smooth());
    const LossBreakdown b = wrong_target_alrp(s, StepKind::smooth());
    EXPECT_EQ(a.total, b.total);
    for (std::size_t i = 0; i < s.anchors.size(); ++i) EXPECT_NEAR(a.score_grads[i], b.score_grads[i], 1e-15);
}

TEST(LossChoice, Parse) {
    EXPECT_EQ(parse_loss_choice("alrp"), LossChoice::ALRP);
    EXPECT_EQ(to_string(parse_loss_choice("ndcg")), "ndcg");
    EXPECT_THROW(parse_loss_choice("focal"), ValidationError);
}

}  // namespace
}  // namespace rankloss
