// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include "aperture/error.hpp"
#include "aperture/harness.hpp"
#include "aperture/toy_env.hpp"
#include "oracles/oracles.hpp"
#include "support/fuzz_turns.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace aperture;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

struct Criterion {
    int number;
    double budget_seconds;
    std::function<Outcome()> run;
};

Mask random_mask(std::mt19937_64& rng, int w, int h, double density) {
    std::bernoulli_distribution on(density);
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, on(rng));
    return m;
}

Image random_image(std::mt19937_64& rng, int w, int h) {
    Image img(w, h);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng() & 0xff);
    return img;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome final_reward_arithmetic() {
    Outcome o;
    const RewardConfig c;
    o.require(c.beta1 == 0.8 && c.beta2 == 1.2, "default weights are not (0.8, 1.2)");
    const struct {
        double task, aperture, expected;
    } cases[] = {{1, 1, 2.0}, {1, 0, 0.8}, {0, 1, 1.2}, {0, 0, 0.0}};
    for (const auto& k : cases) {
        const double got = final_reward(k.task, k.aperture, c);
        o.require(got == k.expected, "R_final(" + fmt("%g", k.task) + ", " + fmt("%g", k.aperture) + ") = " +
                                         fmt("%.17g", got));
    }
    if (o.pass) o.detail = "R_final = 2.0, 0.8, 1.2, 0.0 exactly";
    return o;
}

Outcome seg_reward_combination() {
    Outcome o;
    const RewardConfig c;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> density(0.02, 0.9);
    int clipped = 0;
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const int w = 4 + static_cast<int>(rng() % 13), h = 4 + static_cast<int>(rng() % 13);
        const auto p = random_mask(rng, w, h, density(rng));
        const auto g = random_mask(rng, w, h, density(rng));
        const double direct = 0.7 * oracle::iou_set_count(p, g) + 0.3 * oracle::s_measure_ref(p, g);
        const double r = seg_reward(p, g, c);
        if (direct < 0.1) {
            ++clipped;
            o.require(r == 0.0, "pair " + std::to_string(i) + " below 0.1 scored " + fmt("%.17g", r));
        } else {
            worst = std::max(worst, std::fabs(r - direct));
            o.require(std::fabs(r - direct) <= 1e-12, "pair " + std::to_string(i) + " differs by " + fmt("%g", r - direct));
        }
    }
    o.require(clipped > 0, "no pair fell below the clip threshold");
    if (o.pass) o.detail = "1000 pairs, max |diff| " + fmt("%.1e", worst) + ", " + std::to_string(clipped) + " clipped to 0";
    return o;
}

Outcome metric_oracles() {
    Outcome o;
    double worst = 0;
    auto compare = [&](const Mask& p, const Mask& g) {
        o.require(iou(p, g) == oracle::iou_set_count(p, g), "IoU differs from the set count");
        const double d = std::fabs(s_measure(p, g) - oracle::s_measure_ref(p, g));
        worst = std::max(worst, d);
        o.require(d <= 1e-9, "S-measure differs by " + fmt("%g", d));
    };
    std::vector<Mask> all;
    for (int bits = 0; bits < 512; ++bits) {
        Mask m(3, 3);
        for (int i = 0; i < 9; ++i) m.set(i % 3, i / 3, (bits >> i) & 1);
        all.push_back(m);
    }
    for (const auto& p : all)
        for (const auto& g : all) compare(p, g);
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> density(0.05, 0.95);
    for (int i = 0; i < 1000; ++i) compare(random_mask(rng, 16, 16, density(rng)), random_mask(rng, 16, 16, density(rng)));
    if (o.pass) o.detail = "262144 3x3 pairs + 1000 16x16 pairs, max S diff " + fmt("%.1e", worst);
    return o;
}

Outcome compositing() {
    Outcome o;
    std::mt19937_64 rng(4);
    const ApertureConfig config{1};
    int images = 0;
    for (int w = 1; w <= 32; ++w) {
        for (int h = 1; h <= 32; ++h) {
            const auto img = random_image(rng, w, h);
            const Mask masks[] = {Mask(w, h, true), Mask(w, h, false), random_mask(rng, w, h, 0.5)};
            std::uniform_real_distribution<double> u(0, 1000);
            double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
            const NormalizedBBox boxes[] = {{0, 0, 1000, 1000},
                                            {std::min(a, b), std::min(c, d), std::max(a, b) + 1, std::max(c, d) + 1}};
            for (std::size_t mi = 0; mi < 3; ++mi) {
                for (const auto& box : boxes) {
                    const std::uint64_t seed = rng();
                    const auto view = compose_segment_view(img, masks[mi], box, NoiseSpec{127.5, 63.75, seed}, config);
                    const auto cb = oracle::crop_box(box.x1, box.y1, box.x2, box.y2, w, h);
                    o.require(*view.pixels == oracle::composite_ref(img, masks[mi], cb, seed, 127.5, 63.75),
                              "composite differs at " + std::to_string(w) + "x" + std::to_string(h));
                    if (mi == 0) o.require(*view.pixels == *zoom_crop(img, box, config).pixels, "M=1 is not a pure crop");
                    if (mi == 1) {
                        o.require(*view.pixels == noise_field(NoiseSpec{127.5, 63.75, seed}, view.rect().width,
                                                              view.rect().height),
                                  "M=0 is not pure noise");
                    }
                    ++images;
                }
            }
        }
    }
    if (o.pass) o.detail = std::to_string(images) + " composites bit-exact, M=1 and M=0 collapses hold";
    return o;
}

constexpr const char* kZoomCallExample = R"(<tool_call>
{"name": "image_zoom_in_tool",
"arguments": {"bbox": [10, 20, 100, 200], "obj_label": "the apple on the desk"}}
</tool_call>)";

constexpr const char* kSegmentCallExample = R"(<tool_call>
{"name": "image_segment_tool",
"arguments": {"bbox": [100, 80, 450, 400],
"points": [[300, 180], [280, 200]], "labels": [1, 0], "obj_label": "Cat"}}
</tool_call>)";

Outcome protocol_fidelity() {
    Outcome o;
    const std::string dir = std::string(APERTURE_FIXTURES) + "/prompts/";
    const struct {
        const char* name;
        const char* system;
        const char* user;
    } renders[] = {{"full", "full.system.txt", "full.user.txt"},
                   {"no-observation", "full.system.txt", "no_observation.user.txt"},
                   {"zoom-only", "zoom_only.system.txt", "zoom_only.user.txt"},
                   {"segment-only", "segment_only.system.txt", "segment_only.user.txt"},
                   {"no-grpo", "full.system.txt", "full.user.txt"}};
    for (const auto& r : renders) {
        const auto v = parse_variant(r.name);
        o.require(strip_trailing_newlines(render_system_prompt(v)) == strip_trailing_newlines(read_file(dir + r.system)),
                  std::string(r.name) + " system prompt differs from its fixture");
        o.require(strip_trailing_newlines(std::string(user_prompt_template(v))) ==
                      strip_trailing_newlines(read_file(dir + r.user)),
                  std::string(r.name) + " user prompt differs from its fixture");
    }

    const auto zoom = parse_assistant_turn(kZoomCallExample, PromptVariant::Full, false);
    const auto za = validate_tool_call(*zoom.tool_call, PromptVariant::Full).action;
    o.require(za == ApertureAction{ZoomAction{{10, 20, 100, 200}, std::string("the apple on the desk")}},
              "zoom example parsed to the wrong action");
    const auto seg = parse_assistant_turn(kSegmentCallExample, PromptVariant::Full, false);
    const auto sa = validate_tool_call(*seg.tool_call, PromptVariant::Full).action;
    o.require(sa == ApertureAction{SegmentAction{{100, 80, 450, 400}, {{300, 180, 1}, {280, 200, 0}}, std::string("Cat")}},
              "segment example parsed to the wrong action");

    std::mt19937_64 rng(20240611);
    int ok = 0;
    for (int i = 0; i < 10000; ++i) {
        const bool with_obs = rng() % 2 == 0;
        const auto turn = fuzz::random_turn(rng, with_obs);
        const auto text = render_assistant_turn(turn);
        try {
            const auto parsed =
                parse_assistant_turn(text, with_obs ? PromptVariant::Full : PromptVariant::NoObservation, with_obs);
            if (parsed.same_fields(turn)) ++ok;
        } catch (const Error&) {
        }
    }
    o.require(ok == 10000, std::to_string(10000 - ok) + " fuzzed round trips failed");
    if (o.pass) o.detail = "5 prompt renders byte-exact, both tool-call examples, 10000/10000 round trips";
    return o;
}

Outcome loop_enforcement() {
    Outcome o;
    SyntheticScene scene;
    scene.width = 200;
    scene.height = 100;
    scene.shapes.push_back({Disk{50, 50, 20}, Rgb{220, 30, 30}, "red disk"});
    auto shared = std::make_shared<const SyntheticScene>(scene);
    TaskSpec task;
    task.task_id = "t";
    task.kind = VqaTask{"Which letter is shown? Options: A, B.", "B", {"A", "B"}};
    task.image = std::make_shared<const Image>(render_scene(scene));
    GeometricOracle oracle;
    oracle.register_scene("t", shared);

    const std::string call =
        "<tool_call>\n{\"name\": \"image_zoom_in_tool\", \"arguments\": {\"bbox\": [100, 200, 400, 800]}}\n</tool_call>";
    const std::vector<std::string> skip_observation = {"A gray canvas.\nThinking: zoom in.\n" + call,
                                                       "Thinking: it reads B.\n<answer>B</answer>"};
    auto run = [&](const std::vector<std::string>& texts, PromptVariant v) {
        std::vector<ScriptTurn> turns;
        for (std::size_t i = 0; i < texts.size(); ++i) turns.push_back({"t", static_cast<int>(i), texts[i], {}});
        ScriptedPolicy policy(std::move(turns), ScriptedPolicy::Fallback::Answer, "");
        EpisodeConfig c;
        c.variant = v;
        return run_episode(policy, oracle, task, c);
    };

    const auto full = run(skip_observation, PromptVariant::Full);
    o.require(full.termination.kind == Termination::Kind::Violation &&
                  full.termination.error == ErrorKind::MissingObservation,
              "(a) missing observation was not flagged under full");
    const auto relaxed = run(skip_observation, PromptVariant::NoObservation);
    o.require(relaxed.termination.kind == Termination::Kind::Answered && relaxed.final_answer == "B" &&
                  relaxed.aperture_count() == 1,
              "(b) the same script was not accepted under no-observation");
    const auto two = run({"A gray canvas.\nThinking: both at once.\n" + call + "\n" + call}, PromptVariant::Full);
    o.require(two.termination.kind == Termination::Kind::Violation &&
                  two.termination.error == ErrorKind::MultipleToolCalls && two.aperture_count() == 0,
              "(c) two tool calls in one turn were not rejected");
    if (o.pass) o.detail = "(a) MissingObservation under full, (b) answered under no-observation, (c) MultipleToolCalls";
    return o;
}

// Every template earns the same reward, so every group has zero variance.
class FlatEnvironment : public ToyEnvironment {
public:
    FlatEnvironment() {
        task_.task_id = "flat";
        task_.kind = MathTask{"1 + 1?", "2"};
        task_.image = std::make_shared<const Image>(8, 8);
    }
    int context_count() const override { return 1; }
    std::vector<std::size_t> tasks_of(TaskFamily f) const override {
        return f == TaskFamily::VisualMath ? std::vector<std::size_t>{0} : std::vector<std::size_t>{};
    }
    int context_of(std::size_t) const override { return 0; }
    const TaskSpec& task(std::size_t) const override { return task_; }
    Trajectory rollout(std::size_t, Template, std::uint64_t, const EpisodeConfig&, const RewardConfig&) const override {
        Trajectory t;
        Step s;
        s.kind = StepKind::Answer;
        s.tokens = deterministic_tokens("<answer>2</answer>");
        t.steps.push_back(s);
        RewardBreakdown r;
        r.r_task = 1;
        r.r_final = 0.8;
        t.reward = r;
        return t;
    }

private:
    TaskSpec task_;
};

Outcome agrpo_math() {
    Outcome o;
    const AgrpoConfig c;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> r(2 + rng() % 31);
        for (auto& v : r) v = u(rng);
        const auto a = group_advantages(r, c);
        double sum = 0;
        for (double v : a) sum += v;
        o.require(std::fabs(sum) < 1e-9 * static_cast<double>(r.size()), "advantages sum to " + fmt("%g", sum));
    }

    std::normal_distribution<double> n(0, 0.7);
    double worst = 0;
    for (int point = 0; point < 20; ++point) {
        ToyPolicy policy(4);
        for (auto& v : policy.parameters()) v = n(rng);
        ToyPolicy behaviour = policy;
        for (auto& v : behaviour.parameters()) v += 0.15 * n(rng);
        PolicyBatch batch;
        for (int k = 0; k < 24; ++k) {
            const int ctx = static_cast<int>(rng() % 4);
            const auto choice = behaviour.sample(ctx, rng);
            const double adv = n(rng);
            batch.append(AdvantageVector{adv, {adv, 0.0, adv}, {1, 0, 1}}, DecisionToken{ctx, choice},
                         behaviour.log_prob(ctx, choice));
        }
        std::vector<double> grad;
        policy_surrogate(policy, batch, c, &grad);
        const double h = 1e-6;
        for (std::size_t i = 0; i < policy.parameter_count(); ++i) {
            ToyPolicy plus = policy, minus = policy;
            plus.parameters()[i] += h;
            minus.parameters()[i] -= h;
            const double fd =
                (policy_surrogate(plus, batch, c, nullptr) - policy_surrogate(minus, batch, c, nullptr)) / (2 * h);
            const double rel = std::fabs(fd - grad[i]) / std::max(1.0, std::fabs(grad[i]));
            worst = std::max(worst, rel);
            o.require(rel <= 1e-4, "gradient entry " + std::to_string(i) + " off by " + fmt("%g", rel));
        }
    }

    FlatEnvironment flat;
    ToyPolicy policy(1);
    policy.parameters()[0] = 0.3;
    const std::vector<double> before(policy.parameters().begin(), policy.parameters().end());
    TrainOptions opt;
    opt.steps = 20;
    train_toy(policy, flat, {CurriculumStage::multi_task({1, 0, 0}, 20)}, RewardConfig{}, c, opt);
    o.require(std::vector<double>(policy.parameters().begin(), policy.parameters().end()) == before,
              "zero-variance groups changed the policy");
    if (o.pass) o.detail = "sums < 1e-9*G, 16-parameter FD check max rel err " + fmt("%.1e", worst) + ", flat groups frozen";
    return o;
}

struct ToyResult {
    double usage = 0;
    double accuracy = 0;
};

ToyResult toy_run(const RewardConfig& weights, std::uint64_t seed, int steps) {
    SyntheticEnvironment env(instantiate_all(needle_pool(64, 8, seed)));
    TrainOptions options;
    options.steps = steps;
    options.seed = seed;
    options.episode.seed = seed;
    options.episode.on_missing_observation = ObservationPolicy::Penalize;
    ToyPolicy policy(env.context_count());
    train_toy(policy, env, {CurriculumStage::multi_task({0, 1, 0}, steps)}, weights, AgrpoConfig{}, options);
    EpisodeConfig eval;
    eval.seed = seed;
    const auto r = evaluate_toy(policy, env, weights, eval, 8, seed + 7);
    return {r.mean_aperture_count, r.accuracy};
}

Outcome reward_weight_experiment() {
    Outcome o;
    constexpr int kSteps = 600;
    std::string summary;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto def = toy_run(RewardConfig{}, seed, kSteps);
        const auto alt = toy_run(RewardConfig::alternative(), seed, kSteps);
        std::printf("  seed %llu: (0.8, 1.2) usage %.3f accuracy %.3f | (1.0, 0.8) usage %.3f accuracy %.3f\n",
                    static_cast<unsigned long long>(seed), def.usage, def.accuracy, alt.usage, alt.accuracy);
        const std::string tag = "seed " + std::to_string(seed) + ": ";
        o.require(def.usage >= 0.9, tag + "default usage " + fmt("%.3f", def.usage) + " < 0.9");
        o.require(def.accuracy >= 0.9, tag + "default accuracy " + fmt("%.3f", def.accuracy) + " < 0.9");
        o.require(alt.usage < def.usage, tag + "alternative usage is not lower");
    }
    if (o.pass) o.detail = "3 seeds x " + std::to_string(kSteps) + " steps: usage >= 0.9, accuracy >= 0.9, lower usage with (1.0, 0.8)";
    return o;
}

TrajectoryRecord usage_record(int apertures, double wall_time) {
    TrajectoryRecord r;
    r.task_id = "u";
    r.family = "fine-grained-vqa";
    for (int i = 0; i < apertures; ++i) {
        StepRecord s;
        s.kind = StepKind::Aperture;
        s.action = to_payload(ZoomAction{{0, 0, 500, 500}, std::nullopt});
        s.view_rect = PixelRect{0, 0, 16, 16};
        r.steps.push_back(s);
    }
    StepRecord a;
    a.kind = StepKind::Answer;
    a.text = "<answer>A</answer>";
    r.steps.push_back(a);
    r.final_answer = "A";
    r.termination = Termination::Kind::Answered;
    r.wall_time = wall_time;
    return r;
}

std::string log_of(const std::vector<TrajectoryRecord>& records) {
    std::ostringstream out;
    LogWriter w(out, LogHeader{});
    for (const auto& r : records) w.write(r);
    return out.str();
}

Outcome usage_statistics() {
    Outcome o;
    // counts 0, 1, 1, 2 with latencies 1, 2, 2, 3.5
    std::istringstream in(log_of({usage_record(0, 1.0), usage_record(1, 2.0), usage_record(1, 2.0), usage_record(2, 3.5)}));
    const auto s = compute_usage_stats(in);
    o.require(s.trajectories == 4, "trajectory count");
    o.require(s.histogram == std::map<int, long long>{{0, 1}, {1, 2}, {2, 1}}, "histogram");
    o.require(s.mean_apertures == 1.0, "mean aperture count " + fmt("%.17g", s.mean_apertures));
    o.require(s.mean_latency == 2.125, "mean latency " + fmt("%.17g", s.mean_latency));
    o.require(s.latency_by_count == std::map<int, double>{{0, 1.0}, {1, 2.0}, {2, 3.5}}, "latency by count");

    // 25 trajectories, 34 apertures in total
    std::vector<TrajectoryRecord> records;
    for (auto [k, n] : std::vector<std::pair<int, int>>{{0, 3}, {1, 12}, {2, 8}, {3, 2}}) {
        for (int i = 0; i < n; ++i) records.push_back(usage_record(k, 2.0));
    }
    std::istringstream in2(log_of(records));
    const auto report = format_usage_report(compute_usage_stats(in2));
    o.require(report.find("Mean apertures per trajectory: 1.36\n") != std::string::npos, "1.36 fixture printed:\n" + report);
    if (o.pass) o.detail = "engineered log exact; 1.36 fixture prints \"Mean apertures per trajectory: 1.36\"";
    return o;
}

Outcome non_reproduction() {
    Outcome o;
    std::puts("  Benchmark scores of the trained 8B model are not reproduced here; they need the full backbone");
    std::puts("  and large-scale RL training. They are replaced by:");
    std::puts("    reward arithmetic and weights         -> criteria 1, 2");
    std::puts("    segmentation metrics (IoU, S-measure) -> criterion 3");
    std::puts("    aperture views (crop, composite)      -> criterion 4");
    std::puts("    prompts and tool-call grammar         -> criterion 5");
    std::puts("    think / aperture / observe loop       -> criterion 6");
    std::puts("    AGRPO advantages and surrogate        -> criterion 7");
    std::puts("    reward-weight effect on aperture use  -> criterion 8 (toy policy)");
    std::puts("    aperture usage statistics             -> criterion 9");
    const auto readme = read_file(APERTURE_README);
    o.require(readme.find("## What is not reproduced") != std::string::npos, "README lacks the non-reproduction section");
    for (int k = 1; k <= 9; ++k) {
        o.require(readme.find("criterion " + std::to_string(k)) != std::string::npos,
                  "README mapping does not mention criterion " + std::to_string(k));
    }
    if (o.pass) o.detail = "benchmark numbers documented as not reproduced; README maps them to criteria 1-9";
    return o;
}

} // namespace

int main() {
    const Criterion criteria[] = {
        {1, 1, final_reward_arithmetic}, {2, 10, seg_reward_combination}, {3, 30, metric_oracles},
        {4, 10, compositing},            {5, 30, protocol_fidelity},      {6, 5, loop_enforcement},
        {7, 60, agrpo_math},             {8, 600, reward_weight_experiment}, {9, 5, usage_statistics},
        {10, 1, non_reproduction},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.pass && seconds > c.budget_seconds) {
            o.pass = false;
            o.detail += "; took " + fmt("%.2f", seconds) + " s, budget " + fmt("%g", c.budget_seconds) + " s";
        }
        if (!o.pass) ++failures;
        std::printf("criterion %d: %s - %s (%.2f s)\n", c.number, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds);
        std::fflush(stdout);
    }
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
