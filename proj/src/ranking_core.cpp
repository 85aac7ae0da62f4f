#include "rankloss/ranking_core.hpp"

#include <cmath>
#include <sstream>

#include "rankloss/errors.hpp"

namespace rankloss {

std::vector<std::size_t> Scenario::positives() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].label == AnchorLabel::Positive) ids.push_back(i);
    }
    return ids;
}

std::vector<std::size_t> Scenario::negatives() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].label == AnchorLabel::Negative) ids.push_back(i);
    }
    return ids;
}

void Scenario::validate(bool need_boxes) const {
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (!gts[g].valid()) {
            std::ostringstream msg;
            msg << "gts[" << g << "]: invalid box";
            throw ValidationError(msg.str());
        }
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const AnchorRecord& a = anchors[i];
        auto fail = [i](const std::string& field, const std::string& why) {
            std::ostringstream msg;
            msg << "anchors[" << i << "]." << field << ": " << why;
            throw ValidationError(msg.str());
        };
        if (!std::isfinite(a.score)) fail("score", "must be finite");
        if (a.pred_box && !a.pred_box->valid()) fail("box", "invalid box");
        if (a.label == AnchorLabel::Positive) {
            if (a.gt_index < 0 || static_cast<std::size_t>(a.gt_index) >= gts.size()) {
                fail("gt", "positive anchor must reference a ground truth in [0, " +
                               std::to_string(gts.size()) + ")");
            }
            if (need_boxes && !a.pred_box) fail("box", "positive anchor needs a predicted box");
        }
    }
}

std::string StepKind::describe() const {
    if (is_exact()) return "exact";
    std::ostringstream out;
    out << "smooth(delta=" << delta << ")";
    return out.str();
}

double step(double x, const StepKind& kind) {
    if (kind.is_exact()) return x >= 0.0 ? 1.0 : 0.0;
    if (x < -kind.delta) return 0.0;
    if (x > kind.delta) return 1.0;
    return x / (2.0 * kind.delta) + 0.5;
}

double diff_transform(const Scenario& scenario, std::size_t i, std::size_t j) {
    return scenario.anchors.at(j).score - scenario.anchors.at(i).score;
}

RankStats rank_stats(const Scenario& scenario, const StepKind& kind) {
    if (!kind.is_exact() && !(kind.delta > 0.0)) throw ValidationError("step: delta must be positive");
    RankStats stats;
    stats.positive_ids = scenario.positives();
    stats.negative_ids = scenario.negatives();
    const std::size_t np = stats.positive_ids.size();
    stats.rank.resize(np);
    stats.rank_plus.resize(np);
    stats.n_fp.resize(np);

    for (std::size_t p = 0; p < np; ++p) {
        const std::size_t i = stats.positive_ids[p];
        double plus = 1.0;
        for (std::size_t q = 0; q < np; ++q) {
            if (q == p) continue;
            plus += step(diff_transform(scenario, i, stats.positive_ids[q]), kind);
        }
        double fp = 0.0;
        for (std::size_t j : stats.negative_ids) fp += step(diff_transform(scenario, i, j), kind);
        stats.rank_plus[p] = plus;
        stats.n_fp[p] = fp;
        stats.rank[p] = plus + fp;
    }
    return stats;
}

double PairContext::score_of_positive(std::size_t p) const {
    return scenario.anchors[stats.positive_ids[p]].score;
}

double PairContext::score_of_negative(std::size_t n) const {
    return scenario.anchors[stats.negative_ids[n]].score;
}

double PairContext::step_pn(std::size_t p, std::size_t n) const {
    return rankloss::step(score_of_negative(n) - score_of_positive(p), step);
}

double RankingLossDef::distribution(const PairContext& ctx, std::size_t p, std::size_t n) const {
    const double n_fp = ctx.stats.n_fp[p];
    if (!(n_fp > 0.0)) return 0.0;
    return ctx.step_pn(p, n) / n_fp;
}

namespace {

PairContext make_context(const Scenario& scenario, const StepKind& kind) {
    return PairContext{scenario, kind, rank_stats(scenario, kind)};
}

}  // namespace

GradReport assemble_gradients(const Scenario& scenario, RankingLossDef& loss, const StepKind& kind) {
    const PairContext ctx = make_context(scenario, kind);
    if (ctx.num_positives() == 0) throw ValidationError(std::string(loss.name()) + ": scenario has no positives");
    loss.prepare(ctx);

    GradReport report;
    report.score_grads.assign(scenario.anchors.size(), 0.0);
    const double z = loss.normalizer(ctx);
    report.normalizer = z;

    double local_sum = 0.0;
    double primary_sum = 0.0;
    double target_sum = 0.0;
    for (std::size_t p = 0; p < ctx.num_positives(); ++p) {
        const double local = loss.local_error(ctx, p);
        const double target_local = loss.target_local_error(ctx, p);
        const double removable = loss.removable_error(ctx, p);
        local_sum += local;
        if (removable < 0.0) {
            std::ostringstream msg;
            msg << loss.name() << ": target exceeds primary term for positive anchor "
                << ctx.stats.positive_ids[p] << " (l - l* = " << removable << ")";
            throw NumericalError(msg.str());
        }

        double positive_update = 0.0;
        for (std::size_t n = 0; n < ctx.num_negatives(); ++n) {
            const double share = loss.distribution(ctx, p, n);
            if (share == 0.0) continue;
            const double update = -removable * share;
            positive_update += update;
            report.score_grads[ctx.stats.negative_ids[n]] -= update;
            primary_sum += local * share;
            target_sum += target_local * share;
        }
        report.score_grads[ctx.stats.positive_ids[p]] = positive_update;
    }

    for (double& g : report.score_grads) g /= z;
    report.loss_value = local_sum / z;
    report.primary_sum = primary_sum / z;
    report.target_sum = target_sum / z;
    report.primary_term_sum_check = std::abs(report.loss_value - report.primary_sum);
    return report;
}

double primary_term_sum(const Scenario& scenario, RankingLossDef& loss, const StepKind& kind) {
    const PairContext ctx = make_context(scenario, kind);
    if (ctx.num_positives() == 0) throw ValidationError(std::string(loss.name()) + ": scenario has no positives");
    loss.prepare(ctx);
    double sum = 0.0;
    for (std::size_t p = 0; p < ctx.num_positives(); ++p) {
        for (std::size_t n = 0; n < ctx.num_negatives(); ++n) sum += loss.primary_term(ctx, p, n);
    }
    return sum / loss.normalizer(ctx);
}

GradientMass gradient_mass(const Scenario& scenario, const std::vector<double>& score_grads) {
    GradientMass mass;
    for (std::size_t i = 0; i < scenario.anchors.size(); ++i) {
        const double g = std::abs(score_grads.at(i));
        switch (scenario.anchors[i].label) {
            case AnchorLabel::Positive: mass.positive += g; break;
            case AnchorLabel::Negative: mass.negative += g; break;
            case AnchorLabel::Ignored: break;
        }
    }
    return mass;
}

}  // namespace rankloss
