#include "rankloss/scenario_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

#include "rankloss/errors.hpp"
#include "test_support.hpp"

namespace rankloss {
namespace {

using testing::fixture;
using testing::random_scenario;

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text, "t.json");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

std::string scenario_with_anchor(const std::string& anchor) {
    return R"({"version": 1, "loc_kind": "iou", "gts": [[0, 0, 1, 1]], "anchors": [)" + anchor + "]}";
}

TEST(ScenarioIo, FixturesLoad) {
    const Scenario s = fixture("cr1");
    EXPECT_EQ(s.gts.size(), 5u);
    EXPECT_EQ(s.anchors.size(), 10u);
    EXPECT_EQ(s.positives().size(), 4u);
    EXPECT_EQ(s.loc_kind, LocErrorKind::iou(0.5));
    EXPECT_FALSE(s.comment.empty());
}

TEST(ScenarioIo, RoundTripIsIdentity) {
    std::mt19937_64 rng(151);
    for (int t = 0; t < 20; ++t) {
        Scenario s = random_scenario(rng, {.positives = 5, .negatives = 12, .ignored = 3});
        if (t % 2) s.loc_kind = LocErrorKind::giou(0.1);
        s.comment = "case " + std::to_string(t);
        const Scenario back = parse_scenario(dump_scenario(s));
        EXPECT_EQ(back, s);
        EXPECT_EQ(dump_scenario(back), dump_scenario(s));
    }
}

TEST(ScenarioIo, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "rankloss_io_test.json";
    const Scenario s = fixture("cr2");
    save_scenario(path.string(), s);
    EXPECT_EQ(load_scenario(path.string()), s);
    std::filesystem::remove(path);
}

TEST(ScenarioIo, GiouDefaultsToZeroThreshold) {
    const Scenario s = parse_scenario(R"({"version": 1, "loc_kind": "giou", "gts": [], "anchors": []})");
    EXPECT_EQ(s.loc_kind, LocErrorKind::giou(0.0));
}

TEST(ScenarioIo, FieldPathsInErrors) {
    EXPECT_EQ(error_of(scenario_with_anchor(R"({"label": "neg", "score": "x"})")),
              "t.json: anchors[0].score: expected a number");
    EXPECT_EQ(error_of(scenario_with_anchor(R"({"label": "pos", "gt": 4, "score": 0.5, "box": [0, 0, 1, 1]})")),
              "t.json: anchors[0].gt: index out of range [0, 1)");
    EXPECT_EQ(error_of(scenario_with_anchor(R"({"label": "maybe", "score": 0.5})")),
              "t.json: anchors[0].label: expected \"pos\", \"neg\" or \"ignore\"");
    EXPECT_EQ(error_of(R"({"version": 1, "loc_kind": "iou", "gts": [[0, 0, 1]], "anchors": []})"),
              "t.json: gts[0]: expected [x1, y1, x2, y2]");
    EXPECT_EQ(error_of(R"({"version": 2, "loc_kind": "iou", "gts": [], "anchors": []})"),
              "t.json: version: unsupported version (expected 1)");
    EXPECT_EQ(error_of(R"({"version": 1, "gts": [], "anchors": []})"), "t.json: loc_kind: missing field");
}

TEST(ScenarioIo, SyntaxErrorsNameTheLine) {
    const std::string msg = error_of("{\"version\": 1,\n\"loc_kind\": \"iou\",\n\"gts\": [],\n\"anchors\": [,]}");
    EXPECT_EQ(msg.rfind("t.json:4: malformed JSON", 0), 0u) << msg;
}

TEST(ScenarioIo, InvertedBoxRejected) {
    const std::string msg = error_of(R"({"version": 1, "loc_kind": "iou", "gts": [[1, 0, 0, 1]], "anchors": []})");
    EXPECT_NE(msg.find("gts[0]"), std::string::npos) << msg;
}

TEST(ScenarioIo, MissingFile) { EXPECT_THROW(load_scenario("/nonexistent/rankloss.json"), ValidationError); }

TEST(EvalIo, ClassDefaultsToZero) {
    const EvalInput in =
        parse_eval_input(R"({"detections": [{"score": 0.5, "box": [0, 0, 1, 1]}], "ground_truths": []})");
    ASSERT_EQ(in.detections.size(), 1u);
    EXPECT_EQ(in.detections[0].cls, 0);
}

TEST(EvalIo, RoundTrip) {
    const EvalInput in = testing::eval_fixture("cr3");
    const EvalInput back = parse_eval_input(dump_eval_input(in));
    ASSERT_EQ(back.detections.size(), in.detections.size());
    ASSERT_EQ(back.ground_truths.size(), in.ground_truths.size());
    for (std::size_t k = 0; k < in.detections.size(); ++k) {
        EXPECT_EQ(back.detections[k].score, in.detections[k].score);
        EXPECT_EQ(back.detections[k].box, in.detections[k].box);
        EXPECT_EQ(back.detections[k].cls, in.detections[k].cls);
    }
}

TEST(EvalIo, FieldPathsInErrors) {
    try {
        parse_eval_input(R"({"detections": [{"score": 1, "box": [0, 0, 1]}], "ground_truths": []})", "e.json");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "e.json: detections[0].box: expected [x1, y1, x2, y2]");
    }
}

}  // namespace
}  // namespace rankloss
