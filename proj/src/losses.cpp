#include "rankloss/losses.hpp"

#include <cmath>
#include <string>

#include "rankloss/errors.hpp"

namespace rankloss {

namespace {

class ApDef final : public RankingLossDef {
public:
    std::string_view name() const override { return "ap"; }
    void prepare(const PairContext&) override {}
    double normalizer(const PairContext& ctx) const override {
        return static_cast<double>(ctx.num_positives());
    }
    // 1 - precision(i) = N_FP(i) / rank(i)
    double local_error(const PairContext& ctx, std::size_t p) const override {
        return ctx.stats.n_fp[p] / ctx.stats.rank[p];
    }
    double target_local_error(const PairContext&, std::size_t) const override { return 0.0; }
    double removable_error(const PairContext& ctx, std::size_t p) const override { return local_error(ctx, p); }
};

// Localisation errors of the other positives scored at least as high as each
// positive. Uses the exact step regardless of mode.
std::vector<double> higher_loc_errors(const PairContext& ctx, const std::vector<double>& errors) {
    const std::size_t np = ctx.num_positives();
    std::vector<double> higher(np);
    for (std::size_t p = 0; p < np; ++p) {
        double sum = 0.0;
        for (std::size_t k = 0; k < np; ++k) {
            if (k == p) continue;
            if (ctx.score_of_positive(k) >= ctx.score_of_positive(p)) sum += errors[k];
        }
        higher[p] = sum;
    }
    return higher;
}

class AlrpDef final : public RankingLossDef {
public:
    explicit AlrpDef(bool wrong_target) : wrong_target_(wrong_target) {}

    std::string_view name() const override { return wrong_target_ ? "alrp-wrong-target" : "alrp"; }

    void prepare(const PairContext& ctx) override {
        errors_ = positive_loc_errors(ctx.scenario);
        higher_ = higher_loc_errors(ctx, errors_);
    }
    double normalizer(const PairContext& ctx) const override {
        return static_cast<double>(ctx.num_positives());
    }
    double local_error(const PairContext& ctx, std::size_t p) const override {
        return (ctx.stats.n_fp[p] + errors_[p] + higher_[p]) / ctx.stats.rank[p];
    }
    double target_local_error(const PairContext& ctx, std::size_t p) const override {
        return wrong_target_ ? 0.0 : errors_[p] / ctx.stats.rank[p];
    }
    double removable_error(const PairContext& ctx, std::size_t p) const override {
        if (wrong_target_) return local_error(ctx, p);
        return (ctx.stats.n_fp[p] + higher_[p]) / ctx.stats.rank[p];
    }

    // Numerator of the localisation component: E_loc(i) + sum of higher errors.
    double loc_numerator(std::size_t p) const { return errors_[p] + higher_[p]; }

private:
    bool wrong_target_;
    std::vector<double> errors_;
    std::vector<double> higher_;
};

class NdcgDef final : public RankingLossDef {
public:
    std::string_view name() const override { return "ndcg"; }

    void prepare(const PairContext& ctx) override {
        ideal_gain_ = 0.0;
        for (std::size_t r = 1; r <= ctx.num_positives(); ++r) {
            ideal_gain_ += 1.0 / std::log2(1.0 + static_cast<double>(r));
        }
    }
    double normalizer(const PairContext&) const override { return 1.0; }
    double local_error(const PairContext& ctx, std::size_t p) const override {
        const double gain = 1.0 / std::log2(1.0 + ctx.stats.rank[p]);
        return (share(ctx) - gain) / ideal_gain_;
    }
    // A positive on top of the ranking earns G = 1.
    double target_local_error(const PairContext& ctx, std::size_t) const override {
        return (share(ctx) - 1.0) / ideal_gain_;
    }
    double removable_error(const PairContext& ctx, std::size_t p) const override {
        return (1.0 - 1.0 / std::log2(1.0 + ctx.stats.rank[p])) / ideal_gain_;
    }

private:
    double share(const PairContext& ctx) const {
        return ideal_gain_ / static_cast<double>(ctx.num_positives());
    }
    double ideal_gain_ = 1.0;
};

LossBreakdown from_report(const GradReport& report, const StepKind& kind, std::size_t num_positives) {
    LossBreakdown out;
    out.total = report.loss_value;
    out.cls_component = report.loss_value;
    out.loc_component = 0.0;
    out.score_grads = report.score_grads;
    out.box_grads.assign(num_positives, {0.0, 0.0, 0.0, 0.0});
    out.step = kind;
    out.primary_sum = report.primary_sum;
    out.target_sum = report.target_sum;
    out.normalizer = report.normalizer;
    return out;
}

void require_positives(const Scenario& scenario, const char* who) {
    if (scenario.positives().empty()) throw ValidationError(std::string(who) + ": scenario has no positives");
}

std::vector<double> soft_weights(const RankStats& stats, const Scenario& scenario) {
    const std::size_t np = stats.positive_ids.size();
    std::vector<double> w(np);
    for (std::size_t m = 0; m < np; ++m) {
        const double s_m = scenario.anchors[stats.positive_ids[m]].score;
        double sum = 1.0 / stats.rank[m];
        for (std::size_t i = 0; i < np; ++i) {
            if (i == m) continue;
            // E_loc(m) enters the numerator of every positive it outscores (ties included).
            if (s_m >= scenario.anchors[stats.positive_ids[i]].score) sum += 1.0 / stats.rank[i];
        }
        w[m] = sum / static_cast<double>(np);
    }
    return w;
}

LossBreakdown alrp_impl(const Scenario& scenario, const StepKind& kind, const SelfBalancer* balancer,
                        bool wrong_target) {
    scenario.validate(true);
    require_positives(scenario, "alrp");

    AlrpDef def(wrong_target);
    const GradReport report = assemble_gradients(scenario, def, kind);

    // Component split, recomputed from the same rank statistics.
    const PairContext ctx{scenario, kind, rank_stats(scenario, kind)};
    def.prepare(ctx);
    const std::size_t np = ctx.num_positives();
    double cls = 0.0;
    double loc = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        cls += ctx.stats.n_fp[p] / ctx.stats.rank[p];
        loc += def.loc_numerator(p) / ctx.stats.rank[p];
    }

    LossBreakdown out = from_report(report, kind, np);
    if (wrong_target) {
        // A zero target leaves error on positives that no negative outranks;
        // it still reaches their scores, with no negative to take the other side.
        for (std::size_t p = 0; p < np; ++p) {
            if (ctx.stats.n_fp[p] > 0.0) continue;
            out.score_grads[ctx.stats.positive_ids[p]] = -def.local_error(ctx, p) / static_cast<double>(np);
        }
    }
    out.cls_component = cls / static_cast<double>(np);
    out.loc_component = loc / static_cast<double>(np);

    const double weight = balancer ? balancer->active_weight() : 1.0;
    out.sb_weight_applied = weight;
    const std::vector<double> w = soft_weights(ctx.stats, scenario);
    for (std::size_t p = 0; p < np; ++p) {
        const AnchorRecord& a = scenario.anchors[ctx.stats.positive_ids[p]];
        const LocErrorGrad g = loc_error_grad(*a.pred_box, scenario.gts[a.gt_index], scenario.loc_kind);
        out.nonsmooth_box_grad = out.nonsmooth_box_grad || g.nonsmooth;
        for (int k = 0; k < 4; ++k) out.box_grads[p][k] = weight * w[p] * g.d[k];
    }
    return out;
}

}  // namespace

SelfBalancer SelfBalancer::with_weight(double weight) {
    if (!(weight > 0.0) || !std::isfinite(weight)) throw ValidationError("self-balance weight must be positive");
    SelfBalancer b;
    b.active_weight_ = weight;
    return b;
}

void SelfBalancer::observe(const LossBreakdown& report) {
    if (!(report.loc_component > 0.0)) return;
    ratio_sum_ += report.total / report.loc_component;
    ++count_;
}

void SelfBalancer::end_epoch() {
    if (count_ > 0) active_weight_ = ratio_sum_ / static_cast<double>(count_);
    ratio_sum_ = 0.0;
    count_ = 0;
}

SelfBalancer self_balance_update(SelfBalancer balancer, std::span<const LossBreakdown> epoch_reports) {
    for (const LossBreakdown& r : epoch_reports) balancer.observe(r);
    balancer.end_epoch();
    return balancer;
}

std::unique_ptr<RankingLossDef> make_ap_def() { return std::make_unique<ApDef>(); }
std::unique_ptr<RankingLossDef> make_alrp_def(bool wrong_target) { return std::make_unique<AlrpDef>(wrong_target); }
std::unique_ptr<RankingLossDef> make_ndcg_def() { return std::make_unique<NdcgDef>(); }

LossBreakdown ap_loss(const Scenario& scenario, const StepKind& kind) {
    scenario.validate(false);
    require_positives(scenario, "ap");
    ApDef def;
    const GradReport report = assemble_gradients(scenario, def, kind);
    return from_report(report, kind, scenario.positives().size());
}

std::vector<double> positive_loc_errors(const Scenario& scenario) {
    std::vector<double> errors;
    for (std::size_t id : scenario.positives()) {
        const AnchorRecord& a = scenario.anchors[id];
        if (!a.pred_box) {
            throw ValidationError("anchors[" + std::to_string(id) + "].box: positive anchor needs a predicted box");
        }
        if (a.gt_index < 0 || static_cast<std::size_t>(a.gt_index) >= scenario.gts.size()) {
            throw ValidationError("anchors[" + std::to_string(id) + "].gt: no matched ground truth");
        }
        errors.push_back(loc_error(*a.pred_box, scenario.gts[a.gt_index], scenario.loc_kind));
    }
    return errors;
}

std::vector<double> lrp_per_positive(const Scenario& scenario, const StepKind& kind) {
    scenario.validate(true);
    const PairContext ctx{scenario, kind, rank_stats(scenario, kind)};
    AlrpDef def(false);
    def.prepare(ctx);
    std::vector<double> out(ctx.num_positives());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = def.local_error(ctx, p);
    return out;
}

LossBreakdown alrp_loss(const Scenario& scenario, const StepKind& kind, const SelfBalancer* balancer) {
    return alrp_impl(scenario, kind, balancer, false);
}

LossBreakdown wrong_target_alrp(const Scenario& scenario, const StepKind& kind, const SelfBalancer* balancer) {
    return alrp_impl(scenario, kind, balancer, true);
}

std::vector<double> alrp_soft_weights(const Scenario& scenario, const StepKind& kind) {
    scenario.validate(false);
    require_positives(scenario, "alrp_soft_weights");
    return soft_weights(rank_stats(scenario, kind), scenario);
}

LossBreakdown ndcg_loss(const Scenario& scenario, const StepKind& kind) {
    scenario.validate(false);
    require_positives(scenario, "ndcg");
    NdcgDef def;
    const GradReport report = assemble_gradients(scenario, def, kind);
    return from_report(report, kind, scenario.positives().size());
}

std::string_view to_string(LossChoice choice) {
    switch (choice) {
        case LossChoice::AP: return "ap";
        case LossChoice::ALRP: return "alrp";
        case LossChoice::NDCG: return "ndcg";
    }
    return "?";
}

LossChoice parse_loss_choice(std::string_view text) {
    if (text == "ap") return LossChoice::AP;
    if (text == "alrp") return LossChoice::ALRP;
    if (text == "ndcg") return LossChoice::NDCG;
    throw ValidationError("unknown loss '" + std::string(text) + "' (expected ap, alrp or ndcg)");
}

}  // namespace rankloss
