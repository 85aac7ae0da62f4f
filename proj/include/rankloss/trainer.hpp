#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rankloss/losses.hpp"

namespace rankloss {

/// Synthetic single-class scenario. GT k sits at x = 10k with random size;
/// positive k gets a predicted box whose IoU with GT k is drawn uniformly from
/// iou_mean +- iou_spread and realised exactly by shrinking or growing one side.
/// Positive scores are positive_shift + coupling * z + score_noise * N(0,1),
/// z being the IoU rescaled to [-1, 1]; negative scores are N(0,1).
/// Scores are stored as logits.
struct ScenarioGenSpec {
    std::size_t positives = 20;
    std::size_t negatives = 200;
    double score_noise = 0.2;
    double iou_mean = 0.6;
    double iou_spread = 0.1;
    double coupling = -1.0;  // < 0: better boxes start with lower scores
    double positive_shift = 0.0;
    std::uint64_t seed = 1;
    LocErrorKind loc_kind = LocErrorKind::iou(0.5);
};

Scenario generate_scenario(const ScenarioGenSpec& spec);

/// Parses "P=20,N=200,seed=3,iou=0.6,spread=0.1,noise=0.2,coupling=-1,shift=0".
ScenarioGenSpec parse_gen_spec(const std::string& text);

enum class ScoreMap { Sigmoid, Identity };

struct TrainConfig {
    LossChoice loss = LossChoice::ALRP;
    int epochs = 500;
    double lr = 0.8;
    double box_lr_scale = 0.005;  // box parameters step with lr * box_lr_scale
    double momentum = 0.9;
    // Step decay: the learning rate is multiplied by lr_decay at each listed epoch.
    std::vector<int> lr_steps;
    double lr_decay = 0.1;
    bool self_balance = false;
    bool wrong_target = false;
    bool fast = false;  // aLRP via fast_alrp instead of the naive assembly
    StepKind step = StepKind::smooth(1.0);
    // Identity: the loss sees the logits. Sigmoid squashes them into (0,1) first.
    ScoreMap score_map = ScoreMap::Identity;
};

/// Score logits and the positives' boxes, trained by SGD with momentum.
struct ToyModel {
    std::vector<double> logits;  // per anchor
    std::vector<Box> boxes;      // per positive, Scenario::positives() order
    std::size_t parameter_count() const { return logits.size() + 4 * boxes.size(); }
};

struct TrainRow {
    int epoch = 0;
    double total = 0.0;
    double cls = 0.0;
    double loc = 0.0;
    double ratio = 1.0;  // sum_N |dL/ds| / sum_P |dL/ds|
    double sb_weight = 1.0;
    double rho = 0.0;
    double mean_iou = 0.0;
    // Not part of the CSV; read by sb_warmup_report.
    double score_grad_norm = 0.0;
    double box_grad_norm = 0.0;
};

struct TrainLog {
    std::vector<TrainRow> rows;
    bool terminated = false;  // diverged or left the valid region
    std::string terminal_reason;
    Scenario final_scenario;  // scores after the score map
};

/// Full-batch training: one step per epoch, rows for epochs 0..epochs where
/// the last row is the state after the final step. Scenario scores are the
/// initial logits.
TrainLog train(const Scenario& initial, const TrainConfig& config);

/// Scores the model would hand to the loss.
Scenario evaluated_scenario(const Scenario& base, const ToyModel& model, const TrainConfig& config);

void write_train_csv(std::ostream& out, const TrainLog& log);

struct WarmupRow {
    int epoch = 0;
    double loc_share = 0.0;
    double cls_share = 0.0;
    double sb_weight = 1.0;
    double box_to_score_grad = 0.0;  // box-gradient norm over score-gradient norm
};

std::vector<WarmupRow> sb_warmup_report(const TrainLog& log);

struct TrainJob {
    Scenario scenario;
    TrainConfig config;
};

/// Runs independent jobs on worker threads; at most RANKLOSS_THREADS
/// (default: hardware concurrency) at once. Results keep job order.
std::vector<TrainLog> train_many(const std::vector<TrainJob>& jobs);

std::size_t worker_limit();

}  // namespace rankloss
