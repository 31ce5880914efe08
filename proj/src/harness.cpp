#include "aperture/harness.hpp"

#include "aperture/error.hpp"
#include "aperture/toy_env.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace aperture {

namespace {

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void check_keys(const nlohmann::json& doc, const std::set<std::string>& allowed, const std::string& section) {
    if (!doc.is_object()) throw Error(ErrorKind::ConfigError, section + ": expected an object");
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.count(key)) throw Error(ErrorKind::ConfigError, section + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& field, const std::string& section) {
    if (!doc.contains(key)) return;
    try {
        field = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, section + "." + key + ": " + e.what());
    }
}

StepKind step_kind_from_string(std::string_view name) {
    for (auto k : {StepKind::TextOnly, StepKind::Aperture, StepKind::Answer, StepKind::Rejected}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorKind::LogCorrupt, "unknown step kind '" + std::string(name) + "'");
}

} // namespace

int TrajectoryRecord::aperture_count() const {
    return static_cast<int>(
        std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.kind == StepKind::Aperture; }));
}

TrajectoryRecord to_record(const Trajectory& trajectory, TaskFamily family) {
    TrajectoryRecord r;
    r.task_id = trajectory.task_id;
    r.family = std::string(to_string(family));
    r.variant = trajectory.variant;
    for (const auto& step : trajectory.steps) {
        StepRecord s;
        s.kind = step.kind;
        if (step.action) {
            s.action = to_payload(*step.action);
        } else if (step.turn.tool_call) {
            s.action = step.turn.tool_call;
        }
        s.latency = step.latency.count();
        s.text = step.turn.raw;
        if (step.view) s.view_rect = step.view->rect();
        s.penalized = step.penalized;
        s.error = step.error;
        r.steps.push_back(std::move(s));
    }
    r.final_answer = trajectory.final_answer;
    r.termination = trajectory.termination.kind;
    r.termination_error = trajectory.termination.error;
    r.termination_detail = trajectory.termination.detail;
    r.reward = trajectory.reward;
    r.wall_time = trajectory.wall_time.count();
    r.penalties = trajectory.penalties;
    return r;
}

nlohmann::json to_json(const TrajectoryRecord& r) {
    auto steps = nlohmann::json::array();
    for (const auto& s : r.steps) {
        nlohmann::json step{{"kind", std::string(to_string(s.kind))}, {"latency", s.latency}, {"text", s.text}};
        if (s.action) step["action"] = {{"name", s.action->name}, {"arguments", s.action->arguments}};
        if (s.view_rect) step["view"] = {s.view_rect->x, s.view_rect->y, s.view_rect->width, s.view_rect->height};
        if (s.penalized) step["penalized"] = true;
        if (s.error) step["error"] = std::string(to_string(*s.error));
        steps.push_back(std::move(step));
    }
    nlohmann::json termination{{"kind", std::string(to_string(r.termination))}, {"detail", r.termination_detail}};
    if (r.termination_error) termination["error"] = std::string(to_string(*r.termination_error));
    return {{"type", "trajectory"},
            {"task_id", r.task_id},
            {"family", r.family},
            {"variant", std::string(to_string(r.variant))},
            {"steps", std::move(steps)},
            {"apertures", r.aperture_count()},
            {"final_answer", r.final_answer ? nlohmann::json(*r.final_answer) : nlohmann::json(nullptr)},
            {"termination", std::move(termination)},
            {"reward", r.reward ? to_json(*r.reward) : nlohmann::json(nullptr)},
            {"wall_time", r.wall_time},
            {"penalties", r.penalties}};
}

TrajectoryRecord trajectory_record_from_json(const nlohmann::json& doc) {
    TrajectoryRecord r;
    try {
        if (doc.at("type") != "trajectory") throw Error(ErrorKind::LogCorrupt, "record is not a trajectory");
        r.task_id = doc.at("task_id").get<std::string>();
        r.family = doc.at("family").get<std::string>();
        r.variant = parse_variant(doc.at("variant").get<std::string>());
        for (const auto& s : doc.at("steps")) {
            StepRecord step;
            step.kind = step_kind_from_string(s.at("kind").get<std::string>());
            step.latency = s.at("latency").get<double>();
            step.text = s.at("text").get<std::string>();
            if (s.contains("action")) {
                step.action = ToolCallPayload{s["action"].at("name").get<std::string>(), s["action"].at("arguments")};
            }
            if (s.contains("view")) {
                const auto& v = s["view"];
                step.view_rect = PixelRect{v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>(), v.at(3).get<int>()};
            }
            step.penalized = s.value("penalized", false);
            if (s.contains("error")) step.error = error_kind_from_string(s["error"].get<std::string>());
            r.steps.push_back(std::move(step));
        }
        if (!doc.at("final_answer").is_null()) r.final_answer = doc["final_answer"].get<std::string>();
        const auto& t = doc.at("termination");
        r.termination = termination_kind_from_string(t.at("kind").get<std::string>());
        r.termination_detail = t.value("detail", std::string());
        if (t.contains("error")) r.termination_error = error_kind_from_string(t["error"].get<std::string>());
        if (!doc.at("reward").is_null()) r.reward = reward_breakdown_from_json(doc["reward"]);
        r.wall_time = doc.at("wall_time").get<double>();
        r.penalties = doc.at("penalties").get<int>();
        if (doc.at("apertures").get<int>() != r.aperture_count()) {
            throw Error(ErrorKind::LogCorrupt, "aperture count disagrees with the steps");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::LogCorrupt, e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::LogCorrupt) throw;
        throw Error(ErrorKind::LogCorrupt, e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const EpisodeConfig& c) {
    return {{"variant", std::string(to_string(c.variant))},
            {"max_turns", c.max_turns},
            {"max_apertures", c.max_apertures},
            {"on_missing_observation", c.on_missing_observation == ObservationPolicy::Terminate ? "terminate" : "penalize"},
            {"seed", c.seed},
            {"min_view_pixels", c.min_view_pixels},
            {"require_initial_observation", c.require_initial_observation},
            {"min_view_side", c.aperture.min_view_side},
            {"noise_mean", c.aperture.noise_mean},
            {"noise_stddev", c.aperture.noise_stddev},
            {"temperature", c.sampling.temperature},
            {"max_tokens", c.sampling.max_tokens}};
}

EpisodeConfig episode_config_from_json(const nlohmann::json& doc) {
    const std::string section = "episode";
    check_keys(doc,
               {"variant", "max_turns", "max_apertures", "on_missing_observation", "seed", "min_view_pixels",
                "require_initial_observation", "min_view_side", "noise_mean", "noise_stddev", "temperature",
                "max_tokens"},
               section);
    EpisodeConfig c;
    std::string variant(to_string(c.variant));
    std::string missing = "terminate";
    read_key(doc, "variant", variant, section);
    read_key(doc, "max_turns", c.max_turns, section);
    read_key(doc, "max_apertures", c.max_apertures, section);
    read_key(doc, "on_missing_observation", missing, section);
    read_key(doc, "seed", c.seed, section);
    read_key(doc, "min_view_pixels", c.min_view_pixels, section);
    read_key(doc, "require_initial_observation", c.require_initial_observation, section);
    read_key(doc, "min_view_side", c.aperture.min_view_side, section);
    read_key(doc, "noise_mean", c.aperture.noise_mean, section);
    read_key(doc, "noise_stddev", c.aperture.noise_stddev, section);
    read_key(doc, "temperature", c.sampling.temperature, section);
    read_key(doc, "max_tokens", c.sampling.max_tokens, section);
    try {
        c.variant = parse_variant(variant);
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, std::string("episode.variant: ") + e.what());
    }
    if (missing == "terminate") {
        c.on_missing_observation = ObservationPolicy::Terminate;
    } else if (missing == "penalize") {
        c.on_missing_observation = ObservationPolicy::Penalize;
    } else {
        throw Error(ErrorKind::ConfigError, "episode.on_missing_observation must be terminate or penalize");
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const AgrpoConfig& c) {
    return {{"group_size", c.group_size},
            {"eps_low", c.eps_low},
            {"eps_high", c.eps_high},
            {"kl_weight", c.kl_weight},
            {"std_floor", c.std_floor}};
}

AgrpoConfig agrpo_config_from_json(const nlohmann::json& doc) {
    const std::string section = "agrpo";
    check_keys(doc, {"group_size", "eps_low", "eps_high", "kl_weight", "std_floor"}, section);
    AgrpoConfig c;
    read_key(doc, "group_size", c.group_size, section);
    read_key(doc, "eps_low", c.eps_low, section);
    read_key(doc, "eps_high", c.eps_high, section);
    read_key(doc, "kl_weight", c.kl_weight, section);
    read_key(doc, "std_floor", c.std_floor, section);
    c.validate();
    return c;
}

namespace {

nlohmann::json endpoint_to_json(const std::optional<HttpEndpoint>& e) {
    if (!e) return nullptr;
    return {{"url", e->base_url},
            {"path", e->path},
            {"timeout_seconds", e->timeout_seconds},
            {"max_attempts", e->max_attempts},
            {"backoff_seconds", e->backoff_seconds},
            {"max_concurrency", e->max_concurrency}};
}

std::optional<HttpEndpoint> endpoint_from_json(const nlohmann::json& doc, const std::string& section) {
    if (doc.is_null()) return std::nullopt;
    check_keys(doc, {"url", "path", "timeout_seconds", "max_attempts", "backoff_seconds", "max_concurrency"}, section);
    HttpEndpoint e;
    read_key(doc, "url", e.base_url, section);
    read_key(doc, "path", e.path, section);
    read_key(doc, "timeout_seconds", e.timeout_seconds, section);
    read_key(doc, "max_attempts", e.max_attempts, section);
    read_key(doc, "backoff_seconds", e.backoff_seconds, section);
    read_key(doc, "max_concurrency", e.max_concurrency, section);
    if (e.base_url.empty()) throw Error(ErrorKind::ConfigError, section + ".url is required");
    if (e.max_attempts < 1 || e.max_concurrency < 1 || !(e.timeout_seconds > 0) || e.backoff_seconds < 0) {
        throw Error(ErrorKind::ConfigError, section + ": attempts, concurrency and timeout must be positive");
    }
    return e;
}

} // namespace

nlohmann::json to_json(const LabConfig& c) {
    return {{"reward", to_json(c.reward)},
            {"agrpo", to_json(c.agrpo)},
            {"episode", to_json(c.episode)},
            {"backends", {{"policy", endpoint_to_json(c.policy_endpoint)}, {"segmenter", endpoint_to_json(c.segmenter_endpoint)}}}};
}

LabConfig lab_config_from_json(const nlohmann::json& doc) {
    check_keys(doc, {"reward", "agrpo", "episode", "backends"}, "config");
    LabConfig c;
    if (doc.contains("reward")) {
        check_keys(doc["reward"], {"beta1", "beta2", "alpha", "seg_clip", "aperture_gate"}, "reward");
        c.reward = reward_config_from_json(doc["reward"]);
    }
    if (doc.contains("agrpo")) c.agrpo = agrpo_config_from_json(doc["agrpo"]);
    if (doc.contains("episode")) c.episode = episode_config_from_json(doc["episode"]);
    if (doc.contains("backends")) {
        const auto& b = doc["backends"];
        check_keys(b, {"policy", "segmenter"}, "backends");
        if (b.contains("policy")) c.policy_endpoint = endpoint_from_json(b["policy"], "backends.policy");
        if (b.contains("segmenter")) c.segmenter_endpoint = endpoint_from_json(b["segmenter"], "backends.segmenter");
    }
    return c;
}

LabConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    return lab_config_from_json(doc);
}

// ---------------------------------------------------------------------------

LogWriter::LogWriter(std::ostream& out, const LogHeader& header) : out_(out) {
    const nlohmann::json doc{{"type", "header"},
                             {"format", std::string(kLogFormat)},
                             {"version", header.version},
                             {"episode", to_json(header.episode)},
                             {"reward", to_json(header.reward)}};
    out_ << doc.dump() << "\n";
    out_.flush();
}

void LogWriter::write(const TrajectoryRecord& record) {
    out_ << to_json(record).dump() << "\n";
    out_.flush();
}

TrajectoryLog read_log(std::istream& in) {
    TrajectoryLog log;
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto doc = nlohmann::json::parse(line);
            if (!saw_header) {
                if (doc.value("type", "") != "header" || doc.value("format", "") != kLogFormat) {
                    throw Error(ErrorKind::LogCorrupt, "missing log header");
                }
                if (doc.value("version", 0) != kLogVersion) throw Error(ErrorKind::LogCorrupt, "unsupported log version");
                log.header.version = doc["version"].get<int>();
                if (doc.contains("episode")) log.header.episode = episode_config_from_json(doc["episode"]);
                if (doc.contains("reward")) log.header.reward = reward_config_from_json(doc["reward"]);
                saw_header = true;
                continue;
            }
            log.records.push_back(trajectory_record_from_json(doc));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::LogCorrupt, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return log;
}

TrajectoryLog load_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return read_log(in);
}

// ---------------------------------------------------------------------------

namespace {

TrajectoryRecord evaluate_one(const TaskInstance& instance, PolicyBackend& policy, SegmenterBackend& segmenter,
                              const EpisodeConfig& episode, const RewardConfig& reward) {
    const TaskFamily family = instance.task.family();
    try {
        auto traj = run_episode(policy, segmenter, instance.task, episode);
        traj.reward = score_trajectory(instance.task, traj, reward);
        return to_record(traj, family);
    } catch (const std::exception& e) {
        TrajectoryRecord r;
        r.task_id = instance.task.task_id;
        r.family = std::string(to_string(family));
        r.variant = episode.variant;
        r.termination = Termination::Kind::Violation;
        const auto* err = dynamic_cast<const Error*>(&e);
        r.termination_error = err ? err->kind() : ErrorKind::InternalError;
        r.termination_detail = e.what();
        return r;
    }
}

} // namespace

EvalSummary run_eval(const std::vector<std::shared_ptr<const TaskInstance>>& tasks, PolicyBackend& policy,
                     SegmenterBackend& segmenter, const EpisodeConfig& episode, const RewardConfig& reward,
                     std::ostream& out_log, int workers) {
    episode.validate();
    reward.validate();
    LogWriter writer(out_log, LogHeader{kLogVersion, episode, reward});
    EvalSummary summary;
    const std::size_t n = tasks.size();
    if (n == 0) return summary;

    const int declared = workers > 0 ? workers : std::max(1, policy.max_concurrency());
    const std::size_t worker_count = std::min<std::size_t>(static_cast<std::size_t>(declared), n);
    const std::size_t capacity = 2 * worker_count;

    std::vector<std::optional<TrajectoryRecord>> slots(n);
    std::mutex mutex;
    std::condition_variable ready;
    std::size_t next_write = 0;
    std::atomic<std::size_t> next_task{0};

    auto work = [&] {
        for (;;) {
            const std::size_t i = next_task.fetch_add(1);
            if (i >= n) return;
            {
                std::unique_lock lock(mutex);
                ready.wait(lock, [&] { return i < next_write + capacity; });
            }
            auto record = evaluate_one(*tasks[i], policy, segmenter, episode, reward);
            std::lock_guard lock(mutex);
            slots[i] = std::move(record);
            ready.notify_all();
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < worker_count; ++w) threads.emplace_back(work);

    for (std::size_t k = 0; k < n; ++k) {
        TrajectoryRecord record;
        {
            std::unique_lock lock(mutex);
            ready.wait(lock, [&] { return slots[k].has_value(); });
            record = std::move(*slots[k]);
            slots[k].reset();
            ++next_write;
            ready.notify_all();
        }
        writer.write(record);
        auto& fam = summary.by_family[record.family];
        ++fam.tasks;
        ++summary.tasks;
        if (!record.reward || record.termination == Termination::Kind::BackendError) {
            ++fam.failures;
            ++summary.failures;
        }
        const double r_task = record.reward ? record.reward->r_task : 0.0;
        fam.mean_task_reward += r_task;
        fam.accuracy += r_task == 1.0 ? 1.0 : 0.0;
        fam.mean_apertures += record.aperture_count();
    }
    for (auto& t : threads) t.join();
    for (auto& [name, fam] : summary.by_family) {
        fam.mean_task_reward /= fam.tasks;
        fam.accuracy /= fam.tasks;
        fam.mean_apertures /= fam.tasks;
    }
    return summary;
}

std::string format_eval_summary(const EvalSummary& summary) {
    std::ostringstream out;
    out << "family\ttasks\tfailures\taccuracy\tmean_task_reward\tmean_apertures\n";
    for (const auto& [name, f] : summary.by_family) {
        out << name << '\t' << f.tasks << '\t' << f.failures << '\t' << fixed(f.accuracy, 4) << '\t'
            << fixed(f.mean_task_reward, 4) << '\t' << fixed(f.mean_apertures, 4) << "\n";
    }
    out << "total\t" << summary.tasks << '\t' << summary.failures << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------

UsageStats compute_usage_stats(const std::vector<TrajectoryRecord>& records) {
    UsageStats stats;
    std::map<int, double> latency_sum;
    double count_sum = 0;
    double latency_total = 0;
    for (const auto& r : records) {
        const int k = r.aperture_count();
        ++stats.histogram[k];
        latency_sum[k] += r.wall_time;
        count_sum += k;
        latency_total += r.wall_time;
    }
    stats.trajectories = static_cast<long long>(records.size());
    if (stats.trajectories == 0) return stats;
    stats.mean_apertures = count_sum / static_cast<double>(stats.trajectories);
    stats.mean_latency = latency_total / static_cast<double>(stats.trajectories);
    for (const auto& [k, total] : latency_sum) stats.latency_by_count[k] = total / static_cast<double>(stats.histogram[k]);
    return stats;
}

UsageStats compute_usage_stats(std::istream& log) { return compute_usage_stats(read_log(log).records); }

ReportFormat parse_report_format(std::string_view name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "tsv") return ReportFormat::Tsv;
    throw Error(ErrorKind::ParamError, "unknown report format '" + std::string(name) + "' (expected text or tsv)");
}

std::string format_usage_report(const UsageStats& stats) {
    std::ostringstream out;
    out << "apertures  trajectories\n";
    for (const auto& [k, n] : stats.histogram) {
        char line[64];
        std::snprintf(line, sizeof line, "%9d  %12lld\n", k, n);
        out << line;
    }
    out << "Mean apertures per trajectory: " << fixed(stats.mean_apertures) << "\n";
    out << "Mean latency (s): " << fixed(stats.mean_latency) << "\n";
    out << "Latency by aperture count (s):";
    bool first = true;
    for (const auto& [k, v] : stats.latency_by_count) {
        out << (first ? " " : ", ") << k << ": " << fixed(v);
        first = false;
    }
    out << "\n";
    return out.str();
}

namespace {

std::filesystem::path write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << content;
    return path;
}

} // namespace

std::vector<std::filesystem::path> write_usage_report(const UsageStats& stats, const std::filesystem::path& dir,
                                                      ReportFormat format) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    if (format == ReportFormat::Text) {
        files.push_back(write_file(dir / "usage_report.txt", format_usage_report(stats)));
    } else {
        std::ostringstream s;
        s << "trajectories\t" << stats.trajectories << "\nmean_apertures\t" << stats.mean_apertures
          << "\nmean_latency\t" << stats.mean_latency << "\n";
        files.push_back(write_file(dir / "usage_summary.tsv", s.str()));
    }
    std::ostringstream hist;
    hist << "apertures\ttrajectories\n";
    for (const auto& [k, n] : stats.histogram) hist << k << '\t' << n << "\n";
    files.push_back(write_file(dir / "aperture_histogram.tsv", hist.str()));
    std::ostringstream lat;
    lat << "apertures\tmean_latency\n";
    for (const auto& [k, v] : stats.latency_by_count) lat << k << '\t' << v << "\n";
    files.push_back(write_file(dir / "latency_by_count.tsv", lat.str()));
    return files;
}

std::vector<std::filesystem::path> write_train_report(const TrainReport& report, const std::filesystem::path& dir,
                                                      ReportFormat format) {
    std::filesystem::create_directories(dir);
    const char* ext = format == ReportFormat::Text ? ".txt" : ".tsv";
    const char sep = format == ReportFormat::Text ? ' ' : '\t';
    struct Series {
        const char* name;
        double TrainPoint::*field;
    };
    const Series series[] = {{"reward", &TrainPoint::mean_reward},
                             {"entropy", &TrainPoint::entropy},
                             {"aperture_count", &TrainPoint::mean_aperture_count}};
    std::vector<std::filesystem::path> files;
    for (const auto& s : series) {
        std::ostringstream out;
        out << "step" << sep << s.name << "\n";
        for (const auto& p : report.points) out << p.step << sep << p.*(s.field) << "\n";
        files.push_back(write_file(dir / (std::string(s.name) + ext), out.str()));
    }
    return files;
}

// ---------------------------------------------------------------------------

namespace {

std::string first_difference(const TrajectoryRecord& a, const TrajectoryRecord& b) {
    if (a.task_id != b.task_id) return "task_id";
    if (a.steps.size() != b.steps.size()) {
        return "step count " + std::to_string(a.steps.size()) + " vs " + std::to_string(b.steps.size());
    }
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        if (!(a.steps[i] == b.steps[i])) return "step " + std::to_string(i);
    }
    if (a.final_answer != b.final_answer) return "final_answer";
    if (a.termination != b.termination || a.termination_error != b.termination_error) return "termination";
    if (a.reward != b.reward) return "reward";
    if (a.wall_time != b.wall_time) return "wall_time";
    if (a.penalties != b.penalties) return "penalties";
    if (!(a == b)) return "record fields";
    return {};
}

} // namespace

ReplayResult replay_record(const TrajectoryRecord& record, const TaskInstance& instance, const EpisodeConfig& episode,
                           const RewardConfig& reward) {
    std::vector<ScriptTurn> turns;
    for (std::size_t i = 0; i < record.steps.size(); ++i) {
        turns.push_back({record.task_id, static_cast<int>(i), record.steps[i].text, Seconds(record.steps[i].latency)});
    }
    ScriptedPolicy policy(std::move(turns), ScriptedPolicy::Fallback::Answer, "");
    SceneSegmenter segmenter(instance.scene);
    ReplayResult out;
    out.original = record;
    out.replayed = evaluate_one(instance, policy, segmenter, episode, reward);
    out.difference = first_difference(out.original, out.replayed);
    out.match = out.difference.empty();
    return out;
}

} // namespace aperture
