#pragma once

#include <array>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "rankloss/ranking_core.hpp"

namespace rankloss {

struct LossBreakdown {
    double total = 0.0;
    double cls_component = 0.0;
    double loc_component = 0.0;
    std::vector<double> score_grads;              // per anchor
    std::vector<std::array<double, 4>> box_grads;  // per positive, Scenario::positives() order
    double sb_weight_applied = 1.0;
    StepKind step;

    // Framework bookkeeping, all already divided by Z.
    double primary_sum = 0.0;
    double target_sum = 0.0;
    double normalizer = 1.0;
    bool nonsmooth_box_grad = false;
};

/// Multiplier for the aLRP box gradients, refreshed once per epoch from the
/// running mean of total / loc_component observed during that epoch.
class SelfBalancer {
public:
    SelfBalancer() = default;
    /// A balancer whose current epoch already uses `weight`.
    static SelfBalancer with_weight(double weight);

    double active_weight() const { return active_weight_; }

    /// Record one iteration; iterations with a zero localisation component are skipped.
    void observe(const LossBreakdown& report);

    /// Close the epoch: the mean ratio becomes the active weight. An epoch
    /// without usable observations keeps the previous weight.
    void end_epoch();

    std::size_t observations() const { return count_; }

private:
    double active_weight_ = 1.0;
    double ratio_sum_ = 0.0;
    std::size_t count_ = 0;
};

SelfBalancer self_balance_update(SelfBalancer balancer, std::span<const LossBreakdown> epoch_reports);

// Plug-ins for the primary-term machinery. Exposed so tests and callers can
// drive assemble_gradients() and primary_term_sum() directly.
std::unique_ptr<RankingLossDef> make_ap_def();
std::unique_ptr<RankingLossDef> make_alrp_def(bool wrong_target = false);
std::unique_ptr<RankingLossDef> make_ndcg_def();

LossBreakdown ap_loss(const Scenario& scenario, const StepKind& kind);

/// Per-positive LRP values, Scenario::positives() order.
std::vector<double> lrp_per_positive(const Scenario& scenario, const StepKind& kind);

/// E_loc of every positive, Scenario::positives() order.
std::vector<double> positive_loc_errors(const Scenario& scenario);

LossBreakdown alrp_loss(const Scenario& scenario, const StepKind& kind,
                        const SelfBalancer* balancer = nullptr);

/// The aLRP variant with every target forced to zero. Kept to reproduce the
/// imbalance such a target causes.
LossBreakdown wrong_target_alrp(const Scenario& scenario, const StepKind& kind,
                                const SelfBalancer* balancer = nullptr);

/// Soft-sampling weight of each positive in the localisation component:
/// loc_component = sum_i w_i E_loc(i).
std::vector<double> alrp_soft_weights(const Scenario& scenario, const StepKind& kind);

LossBreakdown ndcg_loss(const Scenario& scenario, const StepKind& kind);

enum class LossChoice { AP, ALRP, NDCG };

std::string_view to_string(LossChoice choice);
LossChoice parse_loss_choice(std::string_view text);

}  // namespace rankloss
