#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rankloss/losses.hpp"

namespace rankloss {

struct FastConfig {
    StepKind step = StepKind::smooth(1.0);
    bool prune = true;  // drop negatives that cannot reach any positive's ramp
};

struct FastStats {
    std::size_t relevant_negatives = 0;  // |N^| after pruning
    std::uint64_t pair_ops = 0;           // step evaluations plus the pruning scan
};

/// aLRP loss and gradients in O(|N| + |P| max(|P|, |N^|)) time.
/// Positives are visited in descending score order (ties by anchor index), and
/// negative gradients accumulate in that order.
LossBreakdown fast_alrp(const Scenario& scenario, const FastConfig& config,
                        const SelfBalancer* balancer = nullptr, FastStats* stats = nullptr);

/// Score below which a negative can never be ranked above a positive:
/// min positive score - delta (smooth) or min positive score (exact).
double prune_threshold(const Scenario& scenario, const StepKind& step);

struct ComplexityRow {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t relevant_negatives = 0;
    std::uint64_t pair_ops = 0;
    double model = 0.0;  // |N| + |P| max(|P|, |N^|)
    double seconds = 0.0;
};

struct ProbeSize {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double prunable_fraction = 0.0;  // share of negatives placed below the prune threshold
};

/// Builds a synthetic scenario per size, runs fast_alrp and reports counted work.
std::vector<ComplexityRow> complexity_probe(const std::vector<ProbeSize>& sizes, std::uint64_t seed = 7);

}  // namespace rankloss
