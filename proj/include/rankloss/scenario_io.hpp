#pragma once

#include <string>
#include <string_view>

#include "rankloss/metrics.hpp"
#include "rankloss/ranking_core.hpp"

namespace rankloss {

/// Scenario files (version 1):
///   {"version": 1, "loc_kind": "iou"|"giou", "tau": 0.5, "comment": "...",
///    "gts": [[x1,y1,x2,y2], ...],
///    "anchors": [{"label": "pos"|"neg"|"ignore", "gt": int|null, "score": s,
///                 "box": [x1,y1,x2,y2]|null}, ...]}
/// Errors are ValidationError messages naming `source`, the line for syntax
/// errors, and the field path (e.g. anchors[3].score) for schema errors.
Scenario parse_scenario(std::string_view text, std::string_view source = "<input>");
std::string dump_scenario(const Scenario& scenario);

Scenario load_scenario(const std::string& path);
void save_scenario(const std::string& path, const Scenario& scenario);

/// Eval files:
///   {"detections": [{"score": s, "box": [..], "class": c}, ...],
///    "ground_truths": [{"box": [..], "class": c}, ...]}
/// "class" defaults to 0.
EvalInput parse_eval_input(std::string_view text, std::string_view source = "<input>");
std::string dump_eval_input(const EvalInput& input);

EvalInput load_eval_input(const std::string& path);
void save_eval_input(const std::string& path, const EvalInput& input);

}  // namespace rankloss
