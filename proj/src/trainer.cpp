#include "rankloss/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "rankloss/errors.hpp"
#include "rankloss/fast_alrp.hpp"
#include "rankloss/metrics.hpp"

namespace rankloss {

namespace {

// Box with IoU exactly t against gt (0 < t <= 1): one side is shrunk or
// grown by the factor t, so one box contains the other.
Box box_with_iou(const Box& gt, double t, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Box b = gt;
    const int mode = pick(rng);
    const bool horizontal = mode % 2 == 0;
    const double len = horizontal ? gt.width() : gt.height();
    const double new_len = mode < 2 ? len * t : len / t;
    // Slide the changed side so the contained box stays inside.
    const double offset = (mode < 2 ? 1.0 : -1.0) * unit(rng) * std::abs(len - new_len);
    if (horizontal) {
        b.x1 = gt.x1 + offset;
        b.x2 = b.x1 + new_len;
    } else {
        b.y1 = gt.y1 + offset;
        b.y2 = b.y1 + new_len;
    }
    return b;
}

double apply_map(double z, ScoreMap map) {
    return map == ScoreMap::Sigmoid ? 1.0 / (1.0 + std::exp(-z)) : z;
}

double map_slope(double z, ScoreMap map) {
    if (map == ScoreMap::Identity) return 1.0;
    const double s = apply_map(z, map);
    return s * (1.0 - s);
}

LossBreakdown evaluate(const Scenario& s, const TrainConfig& cfg, const SelfBalancer& sb) {
    const SelfBalancer* balancer = cfg.self_balance ? &sb : nullptr;
    switch (cfg.loss) {
        case LossChoice::AP: return ap_loss(s, cfg.step);
        case LossChoice::NDCG: return ndcg_loss(s, cfg.step);
        case LossChoice::ALRP:
            if (cfg.wrong_target) return wrong_target_alrp(s, cfg.step, balancer);
            if (cfg.fast) return fast_alrp(s, FastConfig{cfg.step, true}, balancer);
            return alrp_loss(s, cfg.step, balancer);
    }
    throw ValidationError("train: unknown loss");
}

double mean(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

bool finite_model(const ToyModel& m) {
    for (double z : m.logits) {
        if (!std::isfinite(z)) return false;
    }
    for (const Box& b : m.boxes) {
        if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) return false;
    }
    return true;
}

}  // namespace

Scenario generate_scenario(const ScenarioGenSpec& spec) {
    if (spec.positives == 0) throw ValidationError("generate_scenario: P must be at least 1");
    if (!(spec.iou_spread >= 0.0)) throw ValidationError("generate_scenario: spread must be nonnegative");
    const double lo = std::max(spec.iou_mean - spec.iou_spread, spec.loc_kind.tau + 1e-3);
    const double hi = std::min(spec.iou_mean + spec.iou_spread, 1.0);
    if (!(lo <= hi)) throw ValidationError("generate_scenario: IoU range lies below the TP threshold");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Scenario s;
    s.loc_kind = spec.loc_kind;
    std::ostringstream note;
    note << "generated: P=" << spec.positives << " N=" << spec.negatives << " seed=" << spec.seed;
    s.comment = note.str();
    for (std::size_t k = 0; k < spec.positives; ++k) {
        const double x = 10.0 * static_cast<double>(k);
        const double y = 5.0 * unit(rng);
        s.gts.push_back({x, y, x + 1.0 + 2.0 * unit(rng), y + 1.0 + 2.0 * unit(rng)});
    }
    for (std::size_t k = 0; k < spec.positives; ++k) {
        const double t = lo + (hi - lo) * unit(rng);
        const double z = hi > lo ? 2.0 * (t - lo) / (hi - lo) - 1.0 : 0.0;
        AnchorRecord a;
        a.label = AnchorLabel::Positive;
        a.gt_index = static_cast<int>(k);
        a.pred_box = box_with_iou(s.gts[k], t, rng);
        a.score = spec.positive_shift + spec.coupling * z + spec.score_noise * normal(rng);
        s.anchors.push_back(a);
    }
    for (std::size_t n = 0; n < spec.negatives; ++n) {
        AnchorRecord a;
        a.label = AnchorLabel::Negative;
        a.score = normal(rng);
        s.anchors.push_back(a);
    }
    return s;
}

ScenarioGenSpec parse_gen_spec(const std::string& text) {
    ScenarioGenSpec spec;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("--gen: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            std::size_t used = 0;
            if (key == "P") {
                spec.positives = std::stoul(value, &used);
            } else if (key == "N") {
                spec.negatives = std::stoul(value, &used);
            } else if (key == "seed") {
                spec.seed = std::stoull(value, &used);
            } else {
                const double v = std::stod(value, &used);
                if (key == "iou") spec.iou_mean = v;
                else if (key == "spread") spec.iou_spread = v;
                else if (key == "noise") spec.score_noise = v;
                else if (key == "coupling") spec.coupling = v;
                else if (key == "shift") spec.positive_shift = v;
                else throw ValidationError("--gen: unknown key '" + key + "'");
            }
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("--gen: bad value for '" + key + "': '" + value + "'");
        }
    }
    return spec;
}

Scenario evaluated_scenario(const Scenario& base, const ToyModel& model, const TrainConfig& config) {
    Scenario s = base;
    for (std::size_t i = 0; i < s.anchors.size(); ++i) {
        s.anchors[i].score = apply_map(model.logits[i], config.score_map);
    }
    const std::vector<std::size_t> pos = s.positives();
    for (std::size_t k = 0; k < pos.size(); ++k) s.anchors[pos[k]].pred_box = model.boxes[k];
    return s;
}

TrainLog train(const Scenario& initial, const TrainConfig& config) {
    if (!(config.lr > 0.0)) throw ValidationError("train: learning rate must be positive");
    if (!(config.box_lr_scale >= 0.0)) throw ValidationError("train: box learning-rate scale must be nonnegative");
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ValidationError("train: momentum must lie in [0,1)");
    if (config.epochs < 0) throw ValidationError("train: epochs must be nonnegative");
    if (config.wrong_target && config.loss != LossChoice::ALRP) {
        throw ValidationError("train: --wrong-target only applies to aLRP");
    }
    if (config.wrong_target && config.fast) throw ValidationError("train: the fast path has no wrong-target variant");
    initial.validate(true);
    const std::vector<std::size_t> pos = initial.positives();
    if (pos.empty()) throw ValidationError("train: scenario has no positives");

    ToyModel model;
    for (const AnchorRecord& a : initial.anchors) model.logits.push_back(a.score);
    for (std::size_t id : pos) model.boxes.push_back(*initial.anchors[id].pred_box);

    std::vector<double> v_logits(model.logits.size(), 0.0);
    std::vector<std::array<double, 4>> v_boxes(pos.size(), {0.0, 0.0, 0.0, 0.0});
    SelfBalancer balancer;

    TrainLog log;
    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        const Scenario s = evaluated_scenario(initial, model, config);
        LossBreakdown b;
        try {
            b = evaluate(s, config, balancer);
        } catch (const ValidationError& e) {
            log.terminated = true;
            log.terminal_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        } catch (const NumericalError& e) {
            log.terminated = true;
            log.terminal_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        }
        log.final_scenario = s;

        TrainRow row;
        row.epoch = epoch;
        row.total = b.total;
        row.cls = b.cls_component;
        row.loc = b.loc_component;
        row.sb_weight = b.sb_weight_applied;
        const GradientMass mass = gradient_mass(s, b.score_grads);
        if (mass.positive > 0.0) {
            row.ratio = mass.negative / mass.positive;
        } else {
            row.ratio = mass.negative > 0.0 ? INFINITY : 1.0;
        }
        try {
            row.rho = ranking_correlation(s);
        } catch (const ValidationError&) {
            row.rho = NAN;
        }
        row.mean_iou = mean(positive_ious(s));
        double sg = 0.0;
        for (double g : b.score_grads) sg += g * g;
        double bg = 0.0;
        for (const auto& g : b.box_grads) {
            for (double c : g) bg += c * c;
        }
        row.score_grad_norm = std::sqrt(sg);
        row.box_grad_norm = std::sqrt(bg);
        log.rows.push_back(row);

        if (!std::isfinite(b.total)) {
            log.terminated = true;
            log.terminal_reason = "epoch " + std::to_string(epoch) + ": loss is not finite";
            break;
        }
        if (config.loss == LossChoice::ALRP) {
            balancer.observe(b);
            balancer.end_epoch();
        }
        if (epoch == config.epochs) break;

        double lr = config.lr;
        for (int at : config.lr_steps) {
            if (epoch >= at) lr *= config.lr_decay;
        }
        for (std::size_t i = 0; i < model.logits.size(); ++i) {
            const double g = b.score_grads[i] * map_slope(model.logits[i], config.score_map);
            v_logits[i] = config.momentum * v_logits[i] - lr * g;
            model.logits[i] += v_logits[i];
        }
        for (std::size_t k = 0; k < pos.size(); ++k) {
            std::array<double, 4> c = model.boxes[k].as_array();
            for (int d = 0; d < 4; ++d) {
                v_boxes[k][d] = config.momentum * v_boxes[k][d] - lr * config.box_lr_scale * b.box_grads[k][d];
                c[d] += v_boxes[k][d];
            }
            if (c[0] > c[2]) std::swap(c[0], c[2]);
            if (c[1] > c[3]) std::swap(c[1], c[3]);
            model.boxes[k] = Box::from_array(c);
        }
        if (!finite_model(model)) {
            log.terminated = true;
            log.terminal_reason = "epoch " + std::to_string(epoch) + ": parameters are not finite";
            break;
        }
    }
    return log;
}

void write_train_csv(std::ostream& out, const TrainLog& log) {
    out << "epoch,total,cls,loc,ratio,sb_weight,rho,mean_iou\n";
    out.precision(12);
    for (const TrainRow& r : log.rows) {
        out << r.epoch << ',' << r.total << ',' << r.cls << ',' << r.loc << ',' << r.ratio << ',' << r.sb_weight
            << ',' << r.rho << ',' << r.mean_iou << '\n';
    }
    if (log.terminated) out << "# terminated: " << log.terminal_reason << '\n';
}

std::vector<WarmupRow> sb_warmup_report(const TrainLog& log) {
    std::vector<WarmupRow> out;
    for (const TrainRow& r : log.rows) {
        WarmupRow w;
        w.epoch = r.epoch;
        w.sb_weight = r.sb_weight;
        if (r.total > 0.0) {
            w.loc_share = r.loc / r.total;
            w.cls_share = r.cls / r.total;
        }
        w.box_to_score_grad = r.score_grad_norm > 0.0 ? r.box_grad_norm / r.score_grad_norm : 0.0;
        out.push_back(w);
    }
    return out;
}

std::size_t worker_limit() {
    std::size_t limit = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RANKLOSS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) limit = static_cast<std::size_t>(v);
    }
    return limit;
}

std::vector<TrainLog> train_many(const std::vector<TrainJob>& jobs) {
    std::vector<TrainLog> logs(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                logs[j] = train(jobs[j].scenario, jobs[j].config);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::min(worker_limit(), jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return logs;
}

}  // namespace rankloss
