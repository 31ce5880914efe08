#include "aperture/error.hpp"
#include "aperture/reward.hpp"
#include "aperture/tao_loop.hpp"
#include "oracles/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace aperture;

namespace {

Mask from_rows(const std::vector<std::string>& rows) {
    Mask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) m.set(x, y, rows[y][x] == '1');
    return m;
}

Mask from_bits(unsigned bits, int w, int h) {
    Mask m(w, h);
    for (int i = 0; i < w * h; ++i) m.set(i % w, i / w, (bits >> i) & 1u);
    return m;
}

Mask random_mask(std::mt19937_64& rng, int w, int h, double density) {
    Mask m(w, h);
    std::bernoulli_distribution on(density);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, on(rng));
    return m;
}

Trajectory trajectory_with(int apertures, Termination::Kind kind = Termination::Kind::Answered) {
    Trajectory t;
    t.task_id = "t";
    for (int i = 0; i < apertures; ++i) {
        Step s;
        s.kind = StepKind::Aperture;
        t.steps.push_back(s);
    }
    Step last;
    last.kind = StepKind::Answer;
    last.answer = "B";
    t.steps.push_back(last);
    t.final_answer = "B";
    t.termination.kind = kind;
    return t;
}

} // namespace

TEST_CASE("IoU examples and exhaustive agreement with the set-count oracle") {
    const auto a = from_rows({"110", "110", "000"});
    const auto b = from_rows({"111", "111", "000"});
    CHECK(iou(a, b) == doctest::Approx(4.0 / 6.0));
    CHECK(iou(a, b) == oracle::iou_set_count(a, b));
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(from_rows({"10"}), from_rows({"01"})) == 0.0);
    CHECK(iou(Mask(3, 3), Mask(3, 3)) == 1.0);
    CHECK_THROWS_AS(iou(Mask(3, 3), Mask(3, 2)), Error);

    for (unsigned p = 0; p < 512; ++p) {
        for (unsigned g = 0; g < 512; ++g) {
            const auto mp = from_bits(p, 3, 3);
            const auto mg = from_bits(g, 3, 3);
            REQUIRE(iou(mp, mg) == oracle::iou_set_count(mp, mg));
            REQUIRE(iou(mp, mg) == iou(mg, mp));
        }
    }
}

TEST_CASE("IoU grows when correctly predicted pixels are added") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
        const auto gt = random_mask(rng, 8, 8, 0.4);
        auto pred = random_mask(rng, 8, 8, 0.4);
        const double before = iou(pred, gt);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                if (gt.get(x, y) && !pred.get(x, y)) {
                    pred.set(x, y, true);
                    CHECK(iou(pred, gt) >= before);
                    goto next;
                }
    next:;
    }
}

TEST_CASE("S-measure matches the frozen numpy reference values") {
    struct Case {
        const char* name;
        std::vector<std::string> pred, gt;
        double expected;
    };
    // Produced by tests/oracles/s_measure_reference.py.
    const Case cases[] = {
        {"corner_blob", {"1100", "1100", "0000", "0000"}, {"1110", "1100", "0000", "0000"}, 0.90102691240561117},
        {"shifted_bar", {"00000", "11111", "00000", "00000", "00000"}, {"00000", "00000", "11111", "00000", "00000"},
         0.34898916870003682},
        {"checker_vs_half", {"1010", "0101", "1010", "0101"}, {"1100", "1100", "1100", "1100"}, 0.28018699934131791},
        {"single_pixel_hit", {"000", "010", "000"}, {"000", "010", "000"}, 0.99999999999999922},
        {"single_pixel_miss", {"100", "000", "000"}, {"000", "010", "000"}, 0.57072225260464626},
        {"ring",
         {"111111", "100001", "100001", "100001", "100001", "111111"},
         {"000000", "011110", "011110", "011110", "011110", "000000"},
         0.0},
        {"wide", {"0011100", "0111110", "0011100"}, {"0001100", "0011110", "0001100"}, 0.78802770636891828},
        {"gt_empty", {"0110", "0000"}, {"0000", "0000"}, 0.75},
        {"gt_full", {"0110", "0000"}, {"1111", "1111"}, 0.25},
        {"pred_empty", {"0000", "0000", "0000"}, {"0110", "0110", "0000"}, 0.58333333333333337},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        const auto p = from_rows(c.pred);
        const auto g = from_rows(c.gt);
        CHECK(s_measure(p, g) == doctest::Approx(c.expected).epsilon(1e-12));
        CHECK(oracle::s_measure_ref(p, g) == doctest::Approx(c.expected).epsilon(1e-12));
    }
}

TEST_CASE("S-measure examples") {
    const auto gt = from_rows({"0110", "0110", "0000"});
    CHECK(s_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s_measure(Mask(4, 4, true), Mask(4, 4, false)) == 0.0);
    CHECK(s_measure(Mask(4, 4, false), Mask(4, 4, false)) == 1.0);
    CHECK_THROWS_AS(s_measure(Mask(4, 4), Mask(4, 5)), Error);
}

TEST_CASE("S-measure agrees with the reference oracle exhaustively on 3x3 and sampled 4x4") {
    for (unsigned p = 0; p < 512; ++p) {
        for (unsigned g = 0; g < 512; ++g) {
            const auto mp = from_bits(p, 3, 3);
            const auto mg = from_bits(g, 3, 3);
            const double s = s_measure(mp, mg);
            REQUIRE(std::fabs(s - oracle::s_measure_ref(mp, mg)) <= 1e-9);
            REQUIRE(s >= 0.0);
            REQUIRE(s <= 1.0 + 1e-12);
        }
    }
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20000; ++i) {
        const auto mp = from_bits(static_cast<unsigned>(rng() & 0xFFFF), 4, 4);
        const auto mg = from_bits(static_cast<unsigned>(rng() & 0xFFFF), 4, 4);
        REQUIRE(std::fabs(s_measure(mp, mg) - oracle::s_measure_ref(mp, mg)) <= 1e-9);
        REQUIRE(iou(mp, mg) == oracle::iou_set_count(mp, mg));
    }
    for (int i = 0; i < 500; ++i) {
        const auto mp = random_mask(rng, 8, 8, 0.5);
        const auto mg = random_mask(rng, 8, 8, 0.3);
        REQUIRE(std::fabs(s_measure(mp, mg) - oracle::s_measure_ref(mp, mg)) <= 1e-9);
    }
}

TEST_CASE("segmentation reward combines and clips") {
    const RewardConfig c;
    CHECK(seg_reward_from_scores(1, 1, c) == 1.0);
    CHECK(seg_reward_from_scores(0.05, 0.05, c) == 0.0);
    CHECK(seg_reward_from_scores(0.5, 0.8, c) == doctest::Approx(0.59).epsilon(1e-15));
    RewardConfig even = c;
    even.alpha = 0.5;
    CHECK(seg_reward_from_scores(0.1, 0.1, even) == 0.1);  // boundary stays
    const auto m = from_rows({"0110", "0110"});
    CHECK(seg_reward(m, m, c) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 rng(8);
    for (int i = 0; i < 2000; ++i) {
        const auto p = random_mask(rng, 6, 6, 0.3);
        const auto g = random_mask(rng, 6, 6, 0.3);
        const double r = seg_reward(p, g, c);
        const double s = 0.7 * iou(p, g) + 0.3 * s_measure(p, g);
        CHECK((r == 0.0 || r >= c.seg_clip));
        CHECK(r == (s < 0.1 ? 0.0 : s));
    }
}

TEST_CASE("answer normalization") {
    CHECK(answers_match(" b. ", "B", true, false));
    CHECK_FALSE(answers_match("C", "B", true, false));
    CHECK(answers_match("(B) the red one", "B", true, false));
    CHECK(answers_match("B", "b) red", true, false));
    CHECK_FALSE(answers_match("Blue", "B", true, false));
    CHECK(answers_match("1,024", "1024", false, true));
    CHECK(answers_match("7.0", "7", false, true));
    CHECK_FALSE(answers_match("8", "7", false, true));
    CHECK(answers_match("Paris!", "paris", false, false));
    CHECK_FALSE(answers_match("", "", false, false));
    CHECK(normalize_answer("  \"Hello, World.\" ") == "hello, world");
}

TEST_CASE("task reward per family") {
    TaskSpec vqa{"q", VqaTask{"Which letter?", "B", {"A", "B", "C", "D"}}, std::make_shared<const Image>(4, 4), {}};
    auto t = trajectory_with(0);
    t.final_answer = " b. ";
    CHECK(task_reward(vqa, t) == 1.0);
    t.final_answer = "C";
    CHECK(task_reward(vqa, t) == 0.0);
    t.final_answer = "B";
    t.termination.kind = Termination::Kind::MaxTurns;
    CHECK(task_reward(vqa, t) == 0.0);

    TaskSpec empty_gt{"q", VqaTask{"?", "", {}}, std::make_shared<const Image>(4, 4), {}};
    CHECK_THROWS_AS(task_reward(empty_gt, trajectory_with(0)), Error);

    const auto gt = from_rows({"0110", "0110", "0000", "0000"});
    TaskSpec seg{"s", SegmentationTask{"Segment it.", gt}, std::make_shared<const Image>(4, 4), {}};
    auto ts = trajectory_with(1);
    ts.steps[0].mask = std::make_shared<const Mask>(gt);
    CHECK(task_reward(seg, ts) == doctest::Approx(1.0).epsilon(1e-12));
    ts.steps[0].mask = std::make_shared<const Mask>(from_rows({"1001", "1001", "1111", "1111"}));
    CHECK(task_reward(seg, ts) == 0.0);  // iou 0, S 0.1625: below the clip
    CHECK(task_reward(seg, trajectory_with(0)) == 0.0);  // no segment step, nothing to score
}

TEST_CASE("aperture reward gate") {
    const RewardConfig c;
    CHECK(aperture_reward(trajectory_with(1), 1.0, c) == 1.0);
    CHECK(aperture_reward(trajectory_with(0), 1.0, c) == 0.0);
    CHECK(aperture_reward(trajectory_with(2), 0.3, c) == 0.0);
    CHECK(aperture_reward(trajectory_with(2), 0.3000001, c) == 1.0);

    // Only (has aperture, r_task > gate) matters.
    std::mt19937_64 rng(12);
    for (int i = 0; i < 2000; ++i) {
        const int n = static_cast<int>(rng() % 4);
        auto t = trajectory_with(n, static_cast<Termination::Kind>(rng() % 4));
        t.penalties = static_cast<int>(rng() % 3);
        t.wall_time = Seconds(static_cast<double>(rng() % 100));
        for (auto& s : t.steps) s.latency = Seconds(static_cast<double>(rng() % 10));
        if (rng() % 2) {
            Step text;
            text.kind = StepKind::TextOnly;
            t.steps.insert(t.steps.begin(), text);
        }
        const double r = std::uniform_real_distribution<double>(0, 1)(rng);
        CHECK(aperture_reward(t, r, c) == ((n > 0 && r > 0.3) ? 1.0 : 0.0));
    }
}

TEST_CASE("final reward is the exact weighted sum") {
    const RewardConfig d;
    CHECK(final_reward(1, 1, d) == 2.0);
    CHECK(final_reward(1, 0, d) == 0.8);
    CHECK(final_reward(0, 1, d) == 1.2);
    CHECK(final_reward(0, 0, d) == 0.0);
    const auto alt = RewardConfig::alternative();
    CHECK(final_reward(1, 0, alt) == 1.0);
    CHECK(final_reward(1, 1, alt) == 1.8);
}

TEST_CASE("score_trajectory breakdowns") {
    TaskSpec vqa{"q", VqaTask{"Which letter?", "B", {"A", "B", "C", "D"}}, std::make_shared<const Image>(4, 4), {}};
    const RewardConfig c;
    const auto r = score_trajectory(vqa, trajectory_with(1), c);
    CHECK(r.r_task == 1.0);
    CHECK(r.r_aperture == 1.0);
    CHECK(r.r_final == 2.0);
    CHECK_FALSE(r.r_seg);
    CHECK(r.config_used == c);

    auto penalized = trajectory_with(1);
    penalized.penalties = 1;
    const auto p = score_trajectory(vqa, penalized, c);
    CHECK(p.r_task == 0.0);
    CHECK(p.r_aperture == 0.0);
    CHECK(p.r_final == 0.0);

    const auto gt = from_rows({"0110", "0110", "0000", "0000"});
    TaskSpec seg{"s", SegmentationTask{"Segment it.", gt}, std::make_shared<const Image>(4, 4), {}};
    auto ts = trajectory_with(1);
    ts.steps[0].mask = std::make_shared<const Mask>(from_rows({"0110", "0100", "0000", "0000"}));
    const auto sr = score_trajectory(seg, ts, c);
    REQUIRE(sr.r_iou);
    REQUIRE(sr.r_s);
    REQUIRE(sr.r_seg);
    CHECK(*sr.r_iou == 0.75);
    CHECK(*sr.r_seg == seg_reward_from_scores(*sr.r_iou, *sr.r_s, c));
    CHECK(sr.r_task == *sr.r_seg);
    CHECK(sr.r_final == c.beta1 * sr.r_task + c.beta2 * sr.r_aperture);

    const auto json = to_json(sr);
    CHECK(reward_breakdown_from_json(json) == sr);
}

TEST_CASE("reward config validation") {
    CHECK_NOTHROW(RewardConfig{}.validate());
    CHECK_THROWS_AS((RewardConfig{0, 1.2, 0.3, 0.1, 0.3}.validate()), Error);
    CHECK_THROWS_AS((RewardConfig{0.8, 1.2, 1.5, 0.1, 0.3}.validate()), Error);
    CHECK_THROWS_AS((RewardConfig{0.8, 1.2, 0.3, -0.1, 0.3}.validate()), Error);
    CHECK_THROWS_AS((RewardConfig{0.8, 1.2, 0.3, 0.1, 1.3}.validate()), Error);
    CHECK(reward_config_from_json(to_json(RewardConfig::alternative())) == RewardConfig::alternative());
}
