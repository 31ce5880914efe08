#include "aperture/error.hpp"
#include "aperture/harness.hpp"
#include "aperture/tao_loop.hpp"

#include <doctest.h>

#include <cstring>

using namespace aperture;

namespace {

struct Fixture {
    std::shared_ptr<const SyntheticScene> scene;
    TaskSpec task;
    GeometricOracle oracle;

    Fixture() {
        SyntheticScene s;
        s.width = 200;
        s.height = 100;
        s.shapes.push_back({Disk{50, 50, 20}, Rgb{220, 30, 30}, "red disk"});
        scene = std::make_shared<const SyntheticScene>(s);
        task.task_id = "t1";
        task.kind = VqaTask{"Which letter is shown? Options: A, B, C, D.", "B", {"A", "B", "C", "D"}};
        task.image = std::make_shared<const Image>(render_scene(s));
        oracle.register_scene("t1", scene);
    }
};

constexpr const char* kZoom =
    "A gray canvas with a red disk on the left.\nThinking: the marking is small; zoom.\n<tool_call>\n"
    "{\"name\": \"image_zoom_in_tool\", \"arguments\": {\"bbox\": [100, 200, 400, 800]}}\n</tool_call>";
constexpr const char* kSegment =
    "A gray canvas with a red disk on the left.\nThinking: isolate the disk.\n<tool_call>\n"
    "{\"name\": \"image_segment_tool\", \"arguments\": {\"bbox\": [0, 0, 500, 1000], \"points\": [[250, 500]], "
    "\"labels\": [1]}}\n</tool_call>";
constexpr const char* kObserveAnswer = "The zoomed view shows the letter B.\nThinking: that settles it.\n<answer>B</answer>";
constexpr const char* kBareAnswer = "Thinking: the view shows B.\n<answer>B</answer>";

ScriptedPolicy script(std::vector<std::string> texts, ScriptedPolicy::Fallback fb = ScriptedPolicy::Fallback::Answer) {
    std::vector<ScriptTurn> turns;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        turns.push_back({"t1", static_cast<int>(i), texts[i], Seconds(0.5 + static_cast<double>(i))});
    }
    return ScriptedPolicy(std::move(turns), fb, "");
}

template <typename F>
ErrorKind error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InternalError;
}

void check_invariants(const Trajectory& t) {
    int apertures = 0;
    for (const auto& s : t.steps) {
        CHECK(s.view.has_value() == (s.kind == StepKind::Aperture));
        if (s.kind == StepKind::Aperture) {
            ++apertures;
            CHECK(s.view->area() > 0);
        }
    }
    CHECK(apertures == t.aperture_count());
    if (t.termination.kind == Termination::Kind::Answered) {
        REQUIRE(t.final_answer);
        CHECK_FALSE(t.final_answer->empty());
        CHECK(t.steps.back().kind == StepKind::Answer);
    }
}

} // namespace

TEST_CASE("init_episode builds the two opening messages") {
    Fixture f;
    EpisodeConfig c;
    const auto s = init_episode(f.task, c);
    REQUIRE(s.history.size() == 2);
    CHECK(s.history[0].role == Role::System);
    CHECK(s.history[1].role == Role::User);
    CHECK(s.history[1].content[0].kind == ContentPart::Kind::Image);
    CHECK(s.apertures.empty());
    CHECK(s.phase == Phase::AwaitTurn);
    CHECK(s.step_index == 0);

    c.variant = PromptVariant::SegmentOnly;
    const auto seg = init_episode(f.task, c);
    CHECK(seg.history[0].text_content().find("image_zoom_in_tool") == std::string::npos);

    TaskSpec broken = f.task;
    broken.image.reset();
    CHECK(error_of([&] { init_episode(broken, c); }) == ErrorKind::InvalidTask);
}

TEST_CASE("advance and attach_view follow the phase discipline") {
    Fixture f;
    EpisodeConfig c;
    auto s = init_episode(f.task, c);
    const auto zoom_turn = parse_assistant_turn(kZoom, c.variant, true);
    auto t = advance(s, zoom_turn, c);
    CHECK(t.kind == Transition::Kind::NeedToolExecution);
    CHECK(s.phase == Phase::AwaitToolExecution);
    CHECK(s.step_index == 1);
    CHECK(error_of([&] { advance(s, zoom_turn, c); }) == ErrorKind::PhaseError);

    const auto view = zoom_crop(*f.task.image, bbox_of(*t.action));
    attach_view(s, *t.action, view, c);
    CHECK(s.apertures.size() == 1);
    CHECK(s.phase == Phase::AwaitObservation);
    CHECK(s.history.back().tool_result);
    CHECK(s.history.back().role == Role::User);
    CHECK(error_of([&] { attach_view(s, *t.action, view, c); }) == ErrorKind::PhaseError);

    // Missing observation after a view ends the episode under Terminate.
    auto s2 = s;
    const auto bare = parse_assistant_turn(kBareAnswer, c.variant, false);
    const auto v = advance(s2, bare, c);
    CHECK(v.kind == Transition::Kind::Violation);
    CHECK(v.violation == ErrorKind::MissingObservation);
    CHECK(s2.phase == Phase::Done);
    CHECK(error_of([&] { advance(s2, bare, c); }) == ErrorKind::PhaseError);

    const auto fin = advance(s, parse_assistant_turn(kObserveAnswer, c.variant, true), c);
    CHECK(fin.kind == Transition::Kind::Finished);
    CHECK(fin.answer == "B");

    // Roles alternate: system, user, then assistant / tool-result pairs.
    std::vector<Role> roles;
    for (const auto& m : s.history) roles.push_back(m.role);
    CHECK(roles == std::vector<Role>{Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant});
}

TEST_CASE("no-observation variant never waits for a description") {
    Fixture f;
    EpisodeConfig c;
    c.variant = PromptVariant::NoObservation;
    auto s = init_episode(f.task, c);
    auto t = advance(s, parse_assistant_turn(kZoom, c.variant, false), c);
    attach_view(s, *t.action, zoom_crop(*f.task.image, bbox_of(*t.action)), c);
    CHECK(s.phase == Phase::AwaitTurn);
    CHECK_FALSE(expects_observation(s, c));
}

TEST_CASE("aperture budget and view size guards") {
    Fixture f;
    EpisodeConfig c;
    c.max_apertures = 1;
    auto s = init_episode(f.task, c);
    auto t = advance(s, parse_assistant_turn(kZoom, c.variant, true), c);
    const auto view = zoom_crop(*f.task.image, bbox_of(*t.action));
    attach_view(s, *t.action, view, c);
    advance(s, parse_assistant_turn("Something.\nThinking: again.\n" + std::string(strstr(kZoom, "<tool_call>")),
                                    c.variant, true),
            c);
    CHECK(error_of([&] { attach_view(s, *t.action, view, c); }) == ErrorKind::ApertureBudgetExceeded);

    EpisodeConfig small;
    auto s2 = init_episode(f.task, small);
    auto t2 = advance(s2, parse_assistant_turn(kZoom, small.variant, true), small);
    View tiny{std::make_shared<const Image>(4, 4), ZoomCrop{{0, 0, 4, 4}}, nullptr};
    CHECK(error_of([&] { attach_view(s2, *t2.action, tiny, small); }) == ErrorKind::DegenerateBox);

    EpisodeConfig bad;
    bad.max_turns = 2;
    bad.max_apertures = 3;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.max_turns = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scripted zoom then observe-and-answer") {
    Fixture f;
    auto policy = script({kZoom, kObserveAnswer});
    const auto t = run_episode(policy, f.oracle, f.task, EpisodeConfig{});
    CHECK(t.termination.kind == Termination::Kind::Answered);
    CHECK(t.final_answer == "B");
    CHECK(t.aperture_count() == 1);
    REQUIRE(t.steps.size() == 2);
    CHECK(t.steps[0].view->rect() == PixelRect{20, 20, 60, 60});
    CHECK(t.steps[0].env_tokens > 0);
    CHECK(t.steps[0].latency == Seconds(0.5));
    CHECK(t.wall_time == Seconds(2.0));
    check_invariants(t);
}

TEST_CASE("a policy that never answers runs out of turns") {
    Fixture f;
    auto policy = script({"A gray canvas.\nThinking: still looking."}, ScriptedPolicy::Fallback::Loop);
    EpisodeConfig c;
    const auto t = run_episode(policy, f.oracle, f.task, c);
    CHECK(t.termination.kind == Termination::Kind::MaxTurns);
    CHECK(t.steps.size() == static_cast<std::size_t>(c.max_turns));
    check_invariants(t);
}

TEST_CASE("mandatory observation: violation under full, accepted without observation") {
    Fixture f;
    auto policy = script({kZoom, kBareAnswer});
    const auto full = run_episode(policy, f.oracle, f.task, EpisodeConfig{});
    CHECK(full.termination.kind == Termination::Kind::Violation);
    CHECK(full.termination.error == ErrorKind::MissingObservation);
    CHECK(full.steps.back().kind == StepKind::Rejected);
    check_invariants(full);

    EpisodeConfig no_obs;
    no_obs.variant = PromptVariant::NoObservation;
    auto again = script({kZoom, kBareAnswer});
    const auto ok = run_episode(again, f.oracle, f.task, no_obs);
    CHECK(ok.termination.kind == Termination::Kind::Answered);
    CHECK(ok.final_answer == "B");
    check_invariants(ok);

    // Training mode keeps the trajectory and zeroes its reward.
    EpisodeConfig train;
    train.on_missing_observation = ObservationPolicy::Penalize;
    auto third = script({kZoom, kBareAnswer});
    const auto pen = run_episode(third, f.oracle, f.task, train);
    CHECK(pen.termination.kind == Termination::Kind::Answered);
    CHECK(pen.penalties == 1);
    CHECK(pen.steps.back().penalized);
    const auto r = score_trajectory(f.task, pen, RewardConfig{});
    CHECK(r.r_final == 0.0);
}

TEST_CASE("one tool per turn") {
    Fixture f;
    const std::string call = strstr(kZoom, "<tool_call>");
    auto policy = script({"A gray canvas.\nThinking: two at once.\n" + call + "\n" + call});
    const auto t = run_episode(policy, f.oracle, f.task, EpisodeConfig{});
    CHECK(t.termination.kind == Termination::Kind::Violation);
    CHECK(t.termination.error == ErrorKind::MultipleToolCalls);
    CHECK(t.aperture_count() == 0);

    auto both = script({"A gray canvas.\nThinking: hedge.\n" + call + "\n<answer>B</answer>"});
    const auto t2 = run_episode(both, f.oracle, f.task, EpisodeConfig{});
    CHECK(t2.termination.error == ErrorKind::ToolCallWithAnswer);
}

TEST_CASE("variant restrictions surface as violations") {
    Fixture f;
    EpisodeConfig c;
    c.variant = PromptVariant::ZoomOnly;
    auto policy = script({kSegment});
    const auto t = run_episode(policy, f.oracle, f.task, c);
    CHECK(t.termination.kind == Termination::Kind::Violation);
    CHECK(t.termination.error == ErrorKind::VariantViolation);
}

TEST_CASE("segment views, empty masks and backend failures") {
    Fixture f;
    auto policy = script({kSegment, "The view isolates a red disk.\nThinking: done.\n<answer>B</answer>"});
    const auto t = run_episode(policy, f.oracle, f.task, EpisodeConfig{});
    CHECK(t.termination.kind == Termination::Kind::Answered);
    REQUIRE(t.steps[0].mask);
    CHECK(*t.steps[0].mask == rasterize(Disk{50, 50, 20}, 200, 100));
    const auto& prov = std::get<SegmentComposite>(t.steps[0].view->provenance);
    CHECK(prov.noise_seed == noise_seed_for(0, "t1", 1));
    CHECK_FALSE(prov.empty_mask);

    const std::string empty_call =
        "A gray canvas.\nThinking: try the corner.\n<tool_call>\n{\"name\": \"image_segment_tool\", \"arguments\": "
        "{\"bbox\": [800, 0, 1000, 300], \"points\": [[900, 100]], \"labels\": [1]}}\n</tool_call>";
    auto p2 = script({empty_call, "The view is only noise.\nThinking: nothing there.\n<answer>A</answer>"});
    const auto t2 = run_episode(p2, f.oracle, f.task, EpisodeConfig{});
    CHECK(t2.termination.kind == Termination::Kind::Answered);
    CHECK(std::get<SegmentComposite>(t2.steps[0].view->provenance).empty_mask);
    CHECK(t2.steps[0].mask->none());

    GeometricOracle nothing;  // no scene registered: the segmenter is unavailable
    auto p3 = script({kSegment});
    const auto t3 = run_episode(p3, nothing, f.task, EpisodeConfig{});
    CHECK(t3.termination.kind == Termination::Kind::BackendError);
    CHECK(t3.termination.error == ErrorKind::SegmenterUnavailable);
}

namespace {

class FailingPolicy : public PolicyBackend {
public:
    ChatResponse complete(const ChatRequest&) override {
        throw BackendError(ErrorKind::Timeout, "slow service", Seconds(3.0));
    }
};

} // namespace

TEST_CASE("policy failures end the episode and keep their latency") {
    Fixture f;
    FailingPolicy p;
    const auto t = run_episode(p, f.oracle, f.task, EpisodeConfig{});
    CHECK(t.termination.kind == Termination::Kind::BackendError);
    CHECK(t.termination.error == ErrorKind::Timeout);
    CHECK(t.wall_time == Seconds(3.0));
}

TEST_CASE("episodes are deterministic for a fixed seed") {
    Fixture f;
    EpisodeConfig c;
    c.seed = 42;
    auto run = [&] {
        auto p = script({kSegment, "The view isolates a red disk.\nThinking: done.\n<answer>B</answer>"});
        const auto t = run_episode(p, f.oracle, f.task, c);
        return std::make_pair(to_json(to_record(t, TaskFamily::FineGrainedVQA)).dump(), *t.steps[0].view->pixels);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("the first turn may skip its description when configured") {
    Fixture f;
    EpisodeConfig c;
    c.require_initial_observation = false;
    auto p = script({"Thinking: straight to the answer.\n<answer>B</answer>"});
    const auto t = run_episode(p, f.oracle, f.task, c);
    CHECK(t.termination.kind == Termination::Kind::Answered);

    auto strict = script({"Thinking: straight to the answer.\n<answer>B</answer>"});
    const auto t2 = run_episode(strict, f.oracle, f.task, EpisodeConfig{});
    CHECK(t2.termination.error == ErrorKind::MissingObservation);
}
