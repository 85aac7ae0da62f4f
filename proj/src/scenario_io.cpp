#include "rankloss/scenario_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rankloss/errors.hpp"

namespace rankloss {

namespace {

using nlohmann::json;

class Reader {
public:
    explicit Reader(std::string_view source) : source_(source) {}

    [[noreturn]] void fail(const std::string& path, const std::string& why) const {
        throw ValidationError(source_ + ": " + path + ": " + why);
    }

    const json& field(const json& obj, const std::string& path, const char* key) const {
        if (!obj.is_object()) fail(path, "expected an object");
        auto it = obj.find(key);
        if (it == obj.end()) fail(join(path, key), "missing field");
        return *it;
    }

    double number(const json& v, const std::string& path) const {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    }

    int integer(const json& v, const std::string& path) const {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        return v.get<int>();
    }

    Box box(const json& v, const std::string& path) const {
        if (!v.is_array() || v.size() != 4) fail(path, "expected [x1, y1, x2, y2]");
        std::array<double, 4> c{};
        for (std::size_t k = 0; k < 4; ++k) c[k] = number(v[k], path + "[" + std::to_string(k) + "]");
        const Box b = Box::from_array(c);
        if (!b.valid()) fail(path, "corners must satisfy x1 <= x2 and y1 <= y2");
        return b;
    }

    static std::string join(const std::string& path, const char* key) {
        return path.empty() ? std::string(key) : path + "." + key;
    }
    static std::string index(const char* key, std::size_t i) { return std::string(key) + "[" + std::to_string(i) + "]"; }

private:
    std::string source_;
};

json parse_text(std::string_view text, std::string_view source) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t k = 0; k + 1 < upto; ++k) {
            if (text[k] == '\n') ++line;
        }
        std::ostringstream msg;
        msg << source << ":" << line << ": malformed JSON (" << e.what() << ")";
        throw ValidationError(msg.str());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError(path + ": cannot write file");
    out << text;
}

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

Scenario parse_scenario(std::string_view text, std::string_view source) {
    const json doc = parse_text(text, source);
    const Reader r(source);
    if (!doc.is_object()) r.fail("(root)", "expected an object");

    const json& version = r.field(doc, "", "version");
    if (r.integer(version, "version") != 1) r.fail("version", "unsupported version (expected 1)");

    Scenario s;
    const json& kind = r.field(doc, "", "loc_kind");
    if (kind == "iou") {
        s.loc_kind = LocErrorKind::iou();
    } else if (kind == "giou") {
        s.loc_kind = LocErrorKind::giou();
    } else {
        r.fail("loc_kind", "expected \"iou\" or \"giou\"");
    }
    if (doc.contains("tau")) {
        s.loc_kind.tau = r.number(doc["tau"], "tau");
        if (!(s.loc_kind.tau >= 0.0 && s.loc_kind.tau < 1.0)) r.fail("tau", "must lie in [0,1)");
    }
    if (doc.contains("comment")) {
        if (!doc["comment"].is_string()) r.fail("comment", "expected a string");
        s.comment = doc["comment"].get<std::string>();
    }

    const json& gts = r.field(doc, "", "gts");
    if (!gts.is_array()) r.fail("gts", "expected an array");
    for (std::size_t g = 0; g < gts.size(); ++g) s.gts.push_back(r.box(gts[g], Reader::index("gts", g)));

    const json& anchors = r.field(doc, "", "anchors");
    if (!anchors.is_array()) r.fail("anchors", "expected an array");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const std::string path = Reader::index("anchors", i);
        const json& a = anchors[i];
        AnchorRecord rec;
        const json& label = r.field(a, path, "label");
        if (label == "pos") {
            rec.label = AnchorLabel::Positive;
        } else if (label == "neg") {
            rec.label = AnchorLabel::Negative;
        } else if (label == "ignore") {
            rec.label = AnchorLabel::Ignored;
        } else {
            r.fail(path + ".label", "expected \"pos\", \"neg\" or \"ignore\"");
        }
        rec.score = r.number(r.field(a, path, "score"), path + ".score");
        if (a.contains("gt") && !a["gt"].is_null()) {
            rec.gt_index = r.integer(a["gt"], path + ".gt");
            if (rec.gt_index < 0 || static_cast<std::size_t>(rec.gt_index) >= s.gts.size()) {
                r.fail(path + ".gt", "index out of range [0, " + std::to_string(s.gts.size()) + ")");
            }
        } else if (rec.label == AnchorLabel::Positive) {
            r.fail(path + ".gt", "positive anchor needs a ground-truth index");
        }
        if (a.contains("box") && !a["box"].is_null()) rec.pred_box = r.box(a["box"], path + ".box");
        s.anchors.push_back(rec);
    }
    s.validate(false);
    return s;
}

std::string dump_scenario(const Scenario& scenario) {
    json doc;
    doc["version"] = 1;
    doc["loc_kind"] = scenario.loc_kind.overlap == OverlapKind::IoU ? "iou" : "giou";
    doc["tau"] = scenario.loc_kind.tau;
    if (!scenario.comment.empty()) doc["comment"] = scenario.comment;
    doc["gts"] = json::array();
    for (const Box& g : scenario.gts) doc["gts"].push_back(box_json(g));
    doc["anchors"] = json::array();
    for (const AnchorRecord& a : scenario.anchors) {
        json rec;
        switch (a.label) {
            case AnchorLabel::Positive: rec["label"] = "pos"; break;
            case AnchorLabel::Negative: rec["label"] = "neg"; break;
            case AnchorLabel::Ignored: rec["label"] = "ignore"; break;
        }
        rec["gt"] = a.gt_index >= 0 ? json(a.gt_index) : json(nullptr);
        rec["score"] = a.score;
        rec["box"] = a.pred_box ? box_json(*a.pred_box) : json(nullptr);
        doc["anchors"].push_back(rec);
    }
    return doc.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path), path); }

void save_scenario(const std::string& path, const Scenario& scenario) { write_file(path, dump_scenario(scenario)); }

EvalInput parse_eval_input(std::string_view text, std::string_view source) {
    const json doc = parse_text(text, source);
    const Reader r(source);
    if (!doc.is_object()) r.fail("(root)", "expected an object");

    EvalInput in;
    const json& dets = r.field(doc, "", "detections");
    if (!dets.is_array()) r.fail("detections", "expected an array");
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const std::string path = Reader::index("detections", i);
        Detection d;
        d.score = r.number(r.field(dets[i], path, "score"), path + ".score");
        d.box = r.box(r.field(dets[i], path, "box"), path + ".box");
        if (dets[i].contains("class")) d.cls = r.integer(dets[i]["class"], path + ".class");
        in.detections.push_back(d);
    }
    const json& gts = r.field(doc, "", "ground_truths");
    if (!gts.is_array()) r.fail("ground_truths", "expected an array");
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const std::string path = Reader::index("ground_truths", g);
        GroundTruth gt;
        gt.box = r.box(r.field(gts[g], path, "box"), path + ".box");
        if (gts[g].contains("class")) gt.cls = r.integer(gts[g]["class"], path + ".class");
        in.ground_truths.push_back(gt);
    }
    in.validate();
    return in;
}

std::string dump_eval_input(const EvalInput& input) {
    json doc;
    doc["detections"] = json::array();
    for (const Detection& d : input.detections) {
        doc["detections"].push_back({{"score", d.score}, {"box", box_json(d.box)}, {"class", d.cls}});
    }
    doc["ground_truths"] = json::array();
    for (const GroundTruth& g : input.ground_truths) {
        doc["ground_truths"].push_back({{"box", box_json(g.box)}, {"class", g.cls}});
    }
    return doc.dump(2) + "\n";
}

EvalInput load_eval_input(const std::string& path) { return parse_eval_input(read_file(path), path); }

void save_eval_input(const std::string& path, const EvalInput& input) { write_file(path, dump_eval_input(input)); }

}  // namespace rankloss
