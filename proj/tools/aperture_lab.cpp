#include "aperture/agrpo.hpp"
#include "aperture/backends.hpp"
#include "aperture/error.hpp"
#include "aperture/generators.hpp"
#include "aperture/harness.hpp"
#include "aperture/image.hpp"
#include "aperture/toy_env.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;
using namespace aperture;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string variant;
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = ".";
};

LabConfig resolve_config(const Globals& g) {
    LabConfig config;
    if (!g.config.empty()) config = load_config(g.config);
    if (!g.variant.empty()) {
        try {
            config.episode.variant = parse_variant(g.variant);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (g.seed_set) config.episode.seed = g.seed;
    return config;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    return out;
}

ReportFormat report_format(const std::string& name) {
    try {
        return parse_report_format(name);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string family = "fine-grained-vqa";
    int count = 16;
    int control = 0;
    std::string params = "{}";
    bool write_images = false;
};

int cmd_gen_tasks(const Globals& g, const GenArgs& a) {
    const std::uint64_t seed = resolve_config(g).episode.seed;
    std::vector<ManifestEntry> entries;
    if (a.family == "needle-pool") {
        entries = needle_pool(a.count, a.control, seed);
    } else {
        TaskFamily family;
        nlohmann::json params;
        try {
            family = parse_task_family(a.family);
            params = nlohmann::json::parse(a.params);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        entries = make_manifest(family, a.count, seed, params, std::string(to_string(family)));
    }
    const auto instances = instantiate_all(entries);
    const fs::path dir(g.out);
    auto manifest = open_out(dir / "tasks.jsonl");
    write_manifest(manifest, entries);
    if (a.write_images) {
        fs::create_directories(dir / "images");
        for (const auto& inst : instances) write_png(dir / "images" / (inst->task.task_id + ".png"), *inst->task.image);
    }
    std::cout << "wrote " << entries.size() << " tasks to " << (dir / "tasks.jsonl").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string tasks;
    std::string policy = "template:zoom-then-answer";
    std::string segmenter = "oracle";
    int workers = 0;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const LabConfig config = resolve_config(g);
    const auto instances = instantiate_all(load_manifest(a.tasks));

    std::unique_ptr<PolicyBackend> policy;
    if (a.policy.rfind("scripted:", 0) == 0) {
        policy = std::make_unique<ScriptedPolicy>(load_script(a.policy.substr(9), config.episode.variant));
    } else if (a.policy.rfind("template:", 0) == 0) {
        Template t;
        try {
            t = parse_template(a.policy.substr(9));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        auto tp = std::make_unique<TemplatePolicy>(t, config.episode.seed);
        for (const auto& inst : instances) tp->register_task(inst);
        policy = std::move(tp);
    } else if (a.policy == "remote") {
        if (!config.policy_endpoint) throw UsageError("--policy remote needs backends.policy in the config file");
        policy = std::make_unique<RemotePolicy>(*config.policy_endpoint);
    } else {
        throw UsageError("--policy must be scripted:FILE, template:NAME or remote");
    }

    std::unique_ptr<SegmenterBackend> segmenter;
    if (a.segmenter == "oracle") {
        auto oracle = std::make_unique<GeometricOracle>();
        for (const auto& inst : instances) oracle->register_scene(inst->task.task_id, inst->scene);
        segmenter = std::move(oracle);
    } else if (a.segmenter == "remote") {
        if (!config.segmenter_endpoint) throw UsageError("--segmenter remote needs backends.segmenter in the config file");
        segmenter = std::make_unique<RemoteSegmenter>(*config.segmenter_endpoint);
    } else {
        throw UsageError("--segmenter must be oracle or remote");
    }

    PooledPolicy pooled_policy(*policy);
    PooledSegmenter pooled_segmenter(*segmenter);
    const fs::path log_path = fs::path(g.out) / "trajectories.jsonl";
    auto log = open_out(log_path);
    const auto summary =
        run_eval(instances, pooled_policy, pooled_segmenter, config.episode, config.reward, log, a.workers);
    std::cout << format_eval_summary(summary);
    std::cout << "log: " << log_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    int steps = 400;
    std::string weights = "default";
    int tasks = 64;
    int control = 8;
    int warmup_steps = 0;
    int eval_samples = 8;
    double learning_rate = 0.05;
};

int cmd_train_toy(const Globals& g, const TrainArgs& a) {
    LabConfig config = resolve_config(g);
    if (a.weights == "alternative") {
        config.reward = RewardConfig::alternative();
    } else if (a.weights != "default") {
        throw UsageError("--weights must be default or alternative");
    }
    auto entries = needle_pool(a.tasks, a.control, config.episode.seed);
    std::vector<CurriculumStage> stages;
    if (a.warmup_steps > 0) {
        const auto seg = make_manifest(TaskFamily::Segmentation, 16, config.episode.seed + 1, nlohmann::json::object(),
                                       "segmentation");
        entries.insert(entries.end(), seg.begin(), seg.end());
        stages.push_back(CurriculumStage::seg_warmup(a.warmup_steps));
    }
    stages.push_back(CurriculumStage::multi_task({0.0, 1.0, 0.0}, a.steps));
    SyntheticEnvironment env(instantiate_all(entries));

    TrainOptions options;
    options.steps = a.warmup_steps + a.steps;
    options.learning_rate = a.learning_rate;
    options.seed = config.episode.seed;
    options.episode = config.episode;
    options.episode.on_missing_observation = ObservationPolicy::Penalize;

    ToyPolicy policy(env.context_count());
    const auto report = train_toy(policy, env, stages, config.reward, config.agrpo, options);

    const fs::path series_path = fs::path(g.out) / "train_series.txt";
    auto series = open_out(series_path);
    write_train_series(series, report);

    EpisodeConfig eval_episode = config.episode;
    eval_episode.on_missing_observation = ObservationPolicy::Terminate;
    const auto eval = evaluate_toy(policy, env, config.reward, eval_episode, a.eval_samples, config.episode.seed + 7);
    std::printf("weights beta1=%.2f beta2=%.2f\n", config.reward.beta1, config.reward.beta2);
    std::printf("initial entropy %.4f, final entropy %.4f\n", report.initial_entropy, mean_entropy(policy, env));
    std::printf("eval episodes %d: mean apertures %.4f, accuracy %.4f, mean reward %.4f\n", eval.episodes,
                eval.mean_aperture_count, eval.accuracy, eval.mean_reward);
    std::printf("series: %s\n", series_path.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_stats(const Globals& g, const std::string& log_path, const std::string& format, bool write) {
    const auto fmt = report_format(format);
    std::ifstream in(log_path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + log_path);
    const auto stats = compute_usage_stats(in);
    std::cout << format_usage_report(stats);
    if (write) {
        for (const auto& f : write_usage_report(stats, g.out, fmt)) std::cout << "wrote " << f.string() << "\n";
    }
    return 0;
}

int cmd_replay(const std::string& log_path, const std::string& tasks_path) {
    const auto log = load_log(log_path);
    std::map<std::string, std::shared_ptr<const TaskInstance>> by_id;
    for (const auto& inst : instantiate_all(load_manifest(tasks_path))) by_id[inst->task.task_id] = inst;
    int mismatches = 0;
    for (const auto& record : log.records) {
        const auto it = by_id.find(record.task_id);
        if (it == by_id.end()) {
            std::cout << record.task_id << "\tmissing-task\n";
            ++mismatches;
            continue;
        }
        const auto result = replay_record(record, *it->second, log.header.episode, log.header.reward);
        std::cout << record.task_id << '\t' << (result.match ? "match" : "mismatch: " + result.difference) << "\n";
        if (!result.match) ++mismatches;
    }
    std::cout << log.records.size() - mismatches << "/" << log.records.size() << " trajectories replayed identically\n";
    return mismatches == 0 ? 0 : 1;
}

int cmd_report(const Globals& g, const std::string& train, const std::string& log, const std::string& format) {
    const auto fmt = report_format(format);
    if (train.empty() == log.empty()) throw UsageError("report needs exactly one of --train or --log");
    std::vector<fs::path> files;
    if (!train.empty()) {
        std::ifstream in(train);
        if (!in) throw Error(ErrorKind::IoError, "cannot open " + train);
        files = write_train_report(read_train_series(in), g.out, fmt);
    } else {
        std::ifstream in(log);
        if (!in) throw Error(ErrorKind::IoError, "cannot open " + log);
        files = write_usage_report(compute_usage_stats(in), g.out, fmt);
    }
    for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic aperture-reasoning lab: task generation, evaluation, toy training and log tooling"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--variant", g.variant, "Prompt variant: full, no-observation, zoom-only, segment-only, no-grpo");
    app.add_option("--config", g.config, "Lab configuration file (JSON)");
    app.add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { g.seed = s; g.seed_set = true; }, "Random seed");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-tasks", "Generate a task manifest");
    gen_cmd->add_option("--family", gen.family, "visual-math, fine-grained-vqa, segmentation or needle-pool")
        ->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of tasks")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--control", gen.control, "Legible control tasks (needle-pool only)")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--params", gen.params, "Generator parameters as a JSON object");
    gen_cmd->add_flag("--write-images", gen.write_images, "Also write each task image as PNG");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Run tasks through the episode loop and log trajectories");
    eval_cmd->add_option("--tasks", ev.tasks, "Task manifest (JSONL)")->required();
    eval_cmd->add_option("--policy", ev.policy, "scripted:FILE, template:NAME or remote")->capture_default_str();
    eval_cmd->add_option("--segmenter", ev.segmenter, "oracle or remote")->capture_default_str();
    eval_cmd->add_option("--workers", ev.workers, "Episodes in flight (0: backend concurrency)")
        ->check(CLI::NonNegativeNumber);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train-toy", "Train the template policy on the needle pool");
    train_cmd->add_option("--steps", tr.steps, "Training steps")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--weights", tr.weights, "default or alternative reward weights")->capture_default_str();
    train_cmd->add_option("--tasks", tr.tasks, "Needle pool size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--control", tr.control, "Legible control tasks in the pool")->capture_default_str();
    train_cmd->add_option("--warmup-steps", tr.warmup_steps, "Segmentation warm-up steps")->capture_default_str();
    train_cmd->add_option("--eval-samples", tr.eval_samples, "Evaluation samples per task")->capture_default_str();
    train_cmd->add_option("--lr", tr.learning_rate, "Adam learning rate")->capture_default_str();

    std::string stats_log;
    std::string stats_format = "text";
    bool stats_write = false;
    auto* stats_cmd = app.add_subcommand("stats", "Aperture usage statistics of a trajectory log");
    stats_cmd->add_option("log", stats_log, "Trajectory log")->required();
    stats_cmd->add_option("--format", stats_format, "text or tsv")->capture_default_str();
    stats_cmd->add_flag("--write", stats_write, "Also write the report files into --out");

    std::string replay_log;
    std::string replay_tasks;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run logged trajectories and check they reproduce");
    replay_cmd->add_option("log", replay_log, "Trajectory log")->required();
    replay_cmd->add_option("--tasks", replay_tasks, "Task manifest the log was produced from")->required();

    std::string report_train;
    std::string report_log;
    std::string report_fmt = "text";
    auto* report_cmd = app.add_subcommand("report", "Write plot-ready series from a training run or a log");
    report_cmd->add_option("--train", report_train, "Training series file");
    report_cmd->add_option("--log", report_log, "Trajectory log");
    report_cmd->add_option("--format", report_fmt, "text or tsv")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen_cmd) return cmd_gen_tasks(g, gen);
        if (*eval_cmd) return cmd_eval(g, ev);
        if (*train_cmd) return cmd_train_toy(g, tr);
        if (*stats_cmd) return cmd_stats(g, stats_log, stats_format, stats_write);
        if (*replay_cmd) return cmd_replay(replay_log, replay_tasks);
        if (*report_cmd) return cmd_report(g, report_train, report_log, report_fmt);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::ParamError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
