#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankloss/geometry.hpp"

namespace rankloss {

enum class AnchorLabel { Positive, Negative, Ignored };

struct AnchorRecord {
    AnchorLabel label = AnchorLabel::Negative;
    int gt_index = -1;  // matched ground truth, positives only
    double score = 0.0;
    std::optional<Box> pred_box;

    friend bool operator==(const AnchorRecord&, const AnchorRecord&) = default;
};

/// One flattened batch: ground-truth boxes plus labelled anchors.
/// Ignored anchors take part in no sum.
struct Scenario {
    std::vector<Box> gts;
    std::vector<AnchorRecord> anchors;
    LocErrorKind loc_kind;
    std::string comment;  // free-form provenance note, carried through files

    std::vector<std::size_t> positives() const;
    std::vector<std::size_t> negatives() const;

    /// Structural checks: labels, gt references, finite scores, valid boxes.
    /// `need_boxes` additionally requires every positive to carry a predicted box.
    void validate(bool need_boxes) const;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Step function H. Exact: 1 for x >= 0. Smooth: the clamped ramp
/// x / (2 delta) + 1/2 on [-delta, delta].
struct StepKind {
    enum class Mode { Exact, Smooth };
    Mode mode = Mode::Smooth;
    double delta = 1.0;

    static StepKind exact() { return {Mode::Exact, 1.0}; }
    static StepKind smooth(double delta = 1.0) { return {Mode::Smooth, delta}; }

    bool is_exact() const { return mode == Mode::Exact; }
    std::string describe() const;
};

double step(double x, const StepKind& kind);

/// x_ij = s_j - s_i: positive when j outscores i.
double diff_transform(const Scenario& scenario, std::size_t i, std::size_t j);

/// Per-positive rank statistics, indexed like Scenario::positives().
struct RankStats {
    std::vector<std::size_t> positive_ids;
    std::vector<std::size_t> negative_ids;
    std::vector<double> rank;
    std::vector<double> rank_plus;
    std::vector<double> n_fp;
};

RankStats rank_stats(const Scenario& scenario, const StepKind& kind);

/// Everything a loss definition may read while producing its primary terms.
struct PairContext {
    const Scenario& scenario;
    StepKind step;
    RankStats stats;

    std::size_t num_positives() const { return stats.positive_ids.size(); }
    std::size_t num_negatives() const { return stats.negative_ids.size(); }
    double score_of_positive(std::size_t p) const;
    double score_of_negative(std::size_t n) const;
    /// H(x_ij) between the p-th positive and n-th negative.
    double step_pn(std::size_t p, std::size_t n) const;
};

/// A ranking-based loss L = (1/Z) sum_i l(i), expressed through primary terms
/// L_ij = l(i) p(j|i) and their targets under perfect ranking L*_ij.
/// Positives and negatives are addressed by their index into the context's
/// positive / negative lists.
class RankingLossDef {
public:
    virtual ~RankingLossDef() = default;

    virtual std::string_view name() const = 0;

    /// Called once per evaluation, before any other query.
    virtual void prepare(const PairContext& ctx) = 0;

    virtual double normalizer(const PairContext& ctx) const = 0;

    /// l(i), unnormalised.
    virtual double local_error(const PairContext& ctx, std::size_t p) const = 0;

    /// l(i) once i is ranked above every negative; the target primary term is
    /// this value spread by the same distribution.
    virtual double target_local_error(const PairContext& ctx, std::size_t p) const = 0;

    /// l(i) - l*(i): the error a perfect ranking would remove. Losses with a
    /// closed form override this to avoid cancellation.
    virtual double removable_error(const PairContext& ctx, std::size_t p) const {
        return local_error(ctx, p) - target_local_error(ctx, p);
    }

    /// p(j|i). Defaults to the uniform H(x_ij) / N_FP(i), and 0 when N_FP(i) = 0.
    virtual double distribution(const PairContext& ctx, std::size_t p, std::size_t n) const;

    double primary_term(const PairContext& ctx, std::size_t p, std::size_t n) const {
        return local_error(ctx, p) * distribution(ctx, p, n);
    }
    double target_term(const PairContext& ctx, std::size_t p, std::size_t n) const {
        return target_local_error(ctx, p) * distribution(ctx, p, n);
    }
};

struct GradReport {
    std::vector<double> score_grads;  // per anchor; exactly 0 for ignored anchors
    double loss_value = 0.0;          // (1/Z) sum_i l(i)
    double primary_sum = 0.0;         // (1/Z) sum_ij L_ij
    double target_sum = 0.0;          // (1/Z) sum_ij L*_ij
    double primary_term_sum_check = 0.0;  // |loss_value - primary_sum|
    double normalizer = 1.0;
};

/// Error-driven gradients: dL/ds_i = (1/Z) sum_j dx_ij for positives and
/// -(1/Z) sum_i dx_ij for negatives, with dx_ij = L*_ij - L_ij
/// = -removable_error(i) p(j|i).
/// Throws NumericalError if some target exceeds its primary term.
GradReport assemble_gradients(const Scenario& scenario, RankingLossDef& loss, const StepKind& kind);

/// (1/Z) sum_{i in P} sum_{j in N} L_ij.
double primary_term_sum(const Scenario& scenario, RankingLossDef& loss, const StepKind& kind);

/// Sum of |dL/ds| over positives and over negatives.
struct GradientMass {
    double positive = 0.0;
    double negative = 0.0;
};
GradientMass gradient_mass(const Scenario& scenario, const std::vector<double>& score_grads);

}  // namespace rankloss
