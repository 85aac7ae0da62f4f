#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rankloss/errors.hpp"
#include "rankloss/fast_alrp.hpp"
#include "rankloss/losses.hpp"
#include "rankloss/metrics.hpp"
#include "rankloss/scenario_io.hpp"
#include "rankloss/trainer.hpp"

using namespace rankloss;
using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError(std::string(flag) + ": bad number '" + item + "'");
        }
    }
    if (out.empty()) throw ValidationError(std::string(flag) + ": empty list");
    return out;
}

StepKind parse_step(const std::string& mode, double delta) {
    if (mode == "exact") return StepKind::exact();
    if (mode == "smooth") {
        if (!(delta > 0.0)) throw ValidationError("--delta must be positive");
        return StepKind::smooth(delta);
    }
    throw ValidationError("--step: expected exact or smooth");
}

// Writes to `path`, or stdout when it is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) throw ValidationError(path + ": cannot write file");
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

struct LossArgs {
    std::string scenario;
    std::string loss = "alrp";
    std::string step = "smooth";
    double delta = 1.0;
    double sb_weight = 1.0;
    bool wrong_target = false;
    bool fast = false;
    bool grads = false;
    bool json_out = false;
    bool csv_out = false;
};

int cmd_loss(const LossArgs& a) {
    const Scenario s = load_scenario(a.scenario);
    const LossChoice choice = parse_loss_choice(a.loss);
    const StepKind step = parse_step(a.step, a.delta);
    const SelfBalancer balancer = SelfBalancer::with_weight(a.sb_weight);
    if (a.wrong_target && choice != LossChoice::ALRP) throw ValidationError("--wrong-target only applies to aLRP");

    LossBreakdown b;
    switch (choice) {
        case LossChoice::AP: b = ap_loss(s, step); break;
        case LossChoice::NDCG: b = ndcg_loss(s, step); break;
        case LossChoice::ALRP:
            if (a.wrong_target) b = wrong_target_alrp(s, step, &balancer);
            else if (a.fast) b = fast_alrp(s, FastConfig{step, true}, &balancer);
            else b = alrp_loss(s, step, &balancer);
            break;
    }
    if (!std::isfinite(b.total)) throw NumericalError("loss is not finite");
    const GradientMass mass = gradient_mass(s, b.score_grads);

    if (a.csv_out) {
        std::cout.precision(12);
        std::cout << "loss,step,total,cls,loc,sb_weight,grad_sum_pos,grad_sum_neg\n"
                  << to_string(choice) << ',' << step.describe() << ',' << b.total << ',' << b.cls_component << ','
                  << b.loc_component << ',' << b.sb_weight_applied << ',' << mass.positive << ',' << mass.negative
                  << '\n';
        if (a.grads) {
            std::cout << "anchor,score_grad\n";
            for (std::size_t i = 0; i < b.score_grads.size(); ++i) std::cout << i << ',' << b.score_grads[i] << '\n';
            std::cout << "positive,d_x1,d_y1,d_x2,d_y2\n";
            for (std::size_t k = 0; k < b.box_grads.size(); ++k) {
                std::cout << k;
                for (double g : b.box_grads[k]) std::cout << ',' << g;
                std::cout << '\n';
            }
        }
        return 0;
    }
    json out{{"loss", to_string(choice)},
             {"step", step.describe()},
             {"total", b.total},
             {"cls", b.cls_component},
             {"loc", b.loc_component},
             {"sb_weight", b.sb_weight_applied},
             {"grad_sum_pos", mass.positive},
             {"grad_sum_neg", mass.negative}};
    if (a.grads) {
        out["score_grads"] = b.score_grads;
        out["box_grads"] = b.box_grads;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

struct EvalArgs {
    std::string input;
    std::string metric = "map";
    std::string taus = "0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95";
    std::size_t recall_points = 10;
};

json lrp_json(const LRPResult& r) {
    return {{"lrp", r.total}, {"n_tp", r.n_tp}, {"n_fp", r.n_fp}, {"n_fn", r.n_fn}, {"loc_error_sum", r.loc_error_sum}};
}

int cmd_eval(const EvalArgs& a) {
    const EvalInput in = load_eval_input(a.input);
    const std::vector<double> taus = parse_list(a.taus, "--taus");
    json out;
    if (a.metric == "map") {
        const std::vector<double> pts = recall_points_for(a.recall_points);
        out["metric"] = "map";
        json per = json::array();
        for (double t : taus) per.push_back({{"tau", t}, {"ap", ap_at_iou(in, t, pts)}});
        out["per_tau"] = per;
        out["map"] = mean_ap(in, taus, pts);
    } else if (a.metric == "olrp") {
        const OLRPResult r = olrp(in, taus.front());
        out = lrp_json(r.at_best);
        out["metric"] = "olrp";
        out["tau"] = taus.front();
        out["olrp"] = r.value;
        out["threshold"] = r.threshold ? json(*r.threshold) : json(nullptr);
    } else if (a.metric.rfind("lrp@", 0) == 0) {
        const double s = parse_list(a.metric.substr(4), "--metric lrp@S").front();
        out = lrp_json(lrp_at(in, s, taus.front()));
        out["metric"] = "lrp";
        out["tau"] = taus.front();
        out["threshold"] = s;
    } else {
        throw ValidationError("--metric: expected map, olrp or lrp@S");
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

struct TrainArgs {
    std::string gen;
    std::string scenario;
    std::string loss = "alrp";
    int epochs = 500;
    double lr = 0.8;
    double box_lr_scale = 0.005;
    double momentum = 0.9;
    std::string lr_steps;
    double lr_decay = 0.1;
    bool sb = false;
    bool wrong_target = false;
    bool fast = false;
    std::string step = "smooth";
    double delta = 1.0;
    std::string score_map = "identity";
    std::string seeds;
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    if (a.gen.empty() == a.scenario.empty()) throw ValidationError("train: give exactly one of --gen or --scenario");
    TrainConfig cfg;
    cfg.loss = parse_loss_choice(a.loss);
    cfg.epochs = a.epochs;
    cfg.lr = a.lr;
    cfg.box_lr_scale = a.box_lr_scale;
    if (!a.lr_steps.empty()) {
        for (double e : parse_list(a.lr_steps, "--lr-steps")) cfg.lr_steps.push_back(static_cast<int>(e));
    }
    cfg.lr_decay = a.lr_decay;
    cfg.momentum = a.momentum;
    cfg.self_balance = a.sb;
    cfg.wrong_target = a.wrong_target;
    cfg.fast = a.fast;
    cfg.step = parse_step(a.step, a.delta);
    if (a.score_map == "sigmoid") cfg.score_map = ScoreMap::Sigmoid;
    else if (a.score_map == "identity") cfg.score_map = ScoreMap::Identity;
    else throw ValidationError("--score-map: expected sigmoid or identity");

    std::vector<TrainJob> jobs;
    std::vector<std::string> outs;
    if (!a.scenario.empty()) {
        if (!a.seeds.empty()) throw ValidationError("--seeds needs --gen");
        jobs.push_back({load_scenario(a.scenario), cfg});
        outs.push_back(a.out);
    } else {
        ScenarioGenSpec spec = parse_gen_spec(a.gen);
        if (a.seeds.empty()) {
            jobs.push_back({generate_scenario(spec), cfg});
            outs.push_back(a.out);
        } else {
            if (a.out.empty() || a.out == "-") throw ValidationError("--seeds needs --out; one CSV is written per seed");
            const std::string stem = a.out.size() > 4 && a.out.ends_with(".csv") ? a.out.substr(0, a.out.size() - 4) : a.out;
            for (double seed : parse_list(a.seeds, "--seeds")) {
                spec.seed = static_cast<std::uint64_t>(seed);
                jobs.push_back({generate_scenario(spec), cfg});
                outs.push_back(stem + "_seed" + std::to_string(spec.seed) + ".csv");
            }
        }
    }
    const std::vector<TrainLog> logs = train_many(jobs);
    int code = 0;
    for (std::size_t j = 0; j < logs.size(); ++j) {
        Output out(outs[j]);
        write_train_csv(out.stream(), logs[j]);
        if (logs[j].terminated) {
            std::cerr << "training stopped: " << logs[j].terminal_reason << '\n';
            code = 3;
        }
    }
    return code;
}

struct BenchArgs {
    std::string sizes = "10x1000,30x10000,100x100000,300x1000000";
    double prunable = 0.9;
    std::uint64_t seed = 7;
    std::string out;
};

int cmd_bench(const BenchArgs& a) {
    if (!(a.prunable >= 0.0 && a.prunable <= 1.0)) throw ValidationError("--prunable must lie in [0,1]");
    std::vector<ProbeSize> sizes;
    std::stringstream in(a.sizes);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto x = item.find('x');
        try {
            if (x == std::string::npos) throw std::invalid_argument(item);
            sizes.push_back({std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1)), a.prunable});
        } catch (const std::exception&) {
            throw ValidationError("--sizes: expected PxN entries, got '" + item + "'");
        }
    }
    const std::vector<ComplexityRow> rows = complexity_probe(sizes, a.seed);
    Output out(a.out);
    std::ostream& os = out.stream();
    os << "positives,negatives,relevant_negatives,pair_ops,model,ops_over_model,seconds\n";
    for (const ComplexityRow& r : rows) {
        os << r.positives << ',' << r.negatives << ',' << r.relevant_negatives << ',' << r.pair_ops << ','
           << r.model << ',' << static_cast<double>(r.pair_ops) / r.model << ',' << r.seconds << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ranking-based detection losses, metrics and a toy trainer"};
    app.require_subcommand(1);

    LossArgs la;
    auto* loss = app.add_subcommand("loss", "Evaluate a loss and its gradients on a scenario file");
    loss->add_option("--scenario", la.scenario, "Scenario JSON")->required();
    loss->add_option("--loss", la.loss, "ap | alrp | ndcg");
    loss->add_option("--step", la.step, "exact | smooth");
    loss->add_option("--delta", la.delta, "Smoothing half-width");
    loss->add_option("--sb-weight", la.sb_weight, "Multiplier on aLRP box gradients");
    loss->add_flag("--wrong-target", la.wrong_target, "aLRP with zero targets");
    loss->add_flag("--fast", la.fast, "Use the fast aLRP path");
    loss->add_flag("--grads", la.grads, "Include gradients");
    auto* fmt_json = loss->add_flag("--json", la.json_out, "JSON output (default)");
    loss->add_flag("--csv", la.csv_out, "CSV output")->excludes(fmt_json);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a detection set");
    eval->add_option("--input", ea.input, "Eval JSON")->required();
    eval->add_option("--metric", ea.metric, "map | olrp | lrp@S");
    eval->add_option("--taus", ea.taus, "Comma-separated IoU thresholds (olrp and lrp use the first)");
    eval->add_option("--recall-points", ea.recall_points, "10 (default) or 101 for COCO sampling");

    TrainArgs ta;
    auto* trn = app.add_subcommand("train", "Train a toy model and log per-epoch statistics");
    trn->add_option("--gen", ta.gen, "Generator spec, e.g. P=20,N=200,seed=1");
    trn->add_option("--scenario", ta.scenario, "Scenario JSON (scores are initial logits)");
    trn->add_option("--loss", ta.loss, "ap | alrp | ndcg");
    trn->add_option("--epochs", ta.epochs);
    trn->add_option("--lr", ta.lr);
    trn->add_option("--box-lr-scale", ta.box_lr_scale, "Box step relative to --lr");
    trn->add_option("--momentum", ta.momentum);
    trn->add_option("--lr-steps", ta.lr_steps, "Comma-separated epochs at which the learning rate decays");
    trn->add_option("--lr-decay", ta.lr_decay, "Decay factor applied at each --lr-steps epoch");
    trn->add_flag("--sb", ta.sb, "Self-balance the box gradients");
    trn->add_flag("--wrong-target", ta.wrong_target);
    trn->add_flag("--fast", ta.fast);
    trn->add_option("--step", ta.step, "exact | smooth");
    trn->add_option("--delta", ta.delta);
    trn->add_option("--score-map", ta.score_map, "identity (default) | sigmoid");
    trn->add_option("--seeds", ta.seeds, "Comma-separated seeds, run in parallel (needs --gen and --out)");
    trn->add_option("--out", ta.out, "CSV path (default stdout)");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Count fast aLRP work across problem sizes");
    bench->add_option("--sizes", ba.sizes, "Comma-separated PxN entries");
    bench->add_option("--prunable", ba.prunable, "Share of negatives below the prune threshold");
    bench->add_option("--seed", ba.seed);
    bench->add_option("--out", ba.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*loss) return cmd_loss(la);
        if (*eval) return cmd_eval(ea);
        if (*trn) return cmd_train(ta);
        if (*bench) return cmd_bench(ba);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
