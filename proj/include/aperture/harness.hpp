#pragma once

// Evaluation runs, the JSONL trajectory log, usage statistics, reports,
// replay, and the lab configuration file.

#include "aperture/agrpo.hpp"
#include "aperture/backends.hpp"
#include "aperture/generators.hpp"
#include "aperture/tao_loop.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aperture {

inline constexpr std::string_view kLogFormat = "aperture-trajectory-log";
inline constexpr int kLogVersion = 1;

struct StepRecord {
    StepKind kind = StepKind::TextOnly;
    std::optional<ToolCallPayload> action;
    double latency = 0;
    std::string text;
    std::optional<PixelRect> view_rect;
    bool penalized = false;
    std::optional<ErrorKind> error;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// The persisted form of a trajectory.
struct TrajectoryRecord {
    std::string task_id;
    std::string family;
    PromptVariant variant = PromptVariant::Full;
    std::vector<StepRecord> steps;
    std::optional<std::string> final_answer;
    Termination::Kind termination = Termination::Kind::MaxTurns;
    std::optional<ErrorKind> termination_error;
    std::string termination_detail;
    std::optional<RewardBreakdown> reward;
    double wall_time = 0;
    int penalties = 0;

    int aperture_count() const;
    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

TrajectoryRecord to_record(const Trajectory& trajectory, TaskFamily family);
nlohmann::json to_json(const TrajectoryRecord& record);
TrajectoryRecord trajectory_record_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const EpisodeConfig& config);
EpisodeConfig episode_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const AgrpoConfig& config);
AgrpoConfig agrpo_config_from_json(const nlohmann::json& doc);

struct LogHeader {
    int version = kLogVersion;
    EpisodeConfig episode;
    RewardConfig reward;
};

/// Writes the header line on construction, then one trajectory per line.
class LogWriter {
public:
    LogWriter(std::ostream& out, const LogHeader& header);
    void write(const TrajectoryRecord& record);

private:
    std::ostream& out_;
};

struct TrajectoryLog {
    LogHeader header;
    std::vector<TrajectoryRecord> records;
};

/// Throws LogCorrupt naming the offending line.
TrajectoryLog read_log(std::istream& in);
TrajectoryLog load_log(const std::filesystem::path& path);

struct FamilySummary {
    int tasks = 0;
    int failures = 0;  // backend errors and tasks that could not run
    double accuracy = 0;          // share of trajectories with r_task == 1 (VQA and math)
    double mean_task_reward = 0;  // mean r_task; for segmentation, the mean seg reward
    double mean_apertures = 0;
};

struct EvalSummary {
    std::map<std::string, FamilySummary> by_family;
    int tasks = 0;
    int failures = 0;
};

/// Runs every task through the episode loop with up to `workers` episodes in
/// flight (0 picks the policy's declared concurrency) and appends records to
/// the log in task order. Per-task failures become violation records.
EvalSummary run_eval(const std::vector<std::shared_ptr<const TaskInstance>>& tasks, PolicyBackend& policy,
                     SegmenterBackend& segmenter, const EpisodeConfig& episode, const RewardConfig& reward,
                     std::ostream& out_log, int workers = 0);

std::string format_eval_summary(const EvalSummary& summary);

struct UsageStats {
    long long trajectories = 0;
    std::map<int, long long> histogram;
    double mean_apertures = 0;
    double mean_latency = 0;
    std::map<int, double> latency_by_count;

    friend bool operator==(const UsageStats&, const UsageStats&) = default;
};

UsageStats compute_usage_stats(const std::vector<TrajectoryRecord>& records);
UsageStats compute_usage_stats(std::istream& log);

enum class ReportFormat { Text, Tsv };

/// Throws ParamError for names other than "text" and "tsv".
ReportFormat parse_report_format(std::string_view name);

/// Histogram table followed by the mean count, mean latency and latency-by-count lines.
std::string format_usage_report(const UsageStats& stats);

/// Writes the usage report and its plot-ready tables into `dir`; returns the files written.
std::vector<std::filesystem::path> write_usage_report(const UsageStats& stats, const std::filesystem::path& dir,
                                                      ReportFormat format);
/// Writes one file per training series (reward, entropy, aperture count) into `dir`.
std::vector<std::filesystem::path> write_train_report(const TrainReport& report, const std::filesystem::path& dir,
                                                      ReportFormat format);

struct ReplayResult {
    bool match = false;
    TrajectoryRecord original;
    TrajectoryRecord replayed;
    std::string difference;
};

/// Feeds the logged turns back through the episode loop as a script and
/// compares the rebuilt record with the logged one.
ReplayResult replay_record(const TrajectoryRecord& record, const TaskInstance& instance, const EpisodeConfig& episode,
                           const RewardConfig& reward);

struct LabConfig {
    RewardConfig reward;
    AgrpoConfig agrpo;
    EpisodeConfig episode;
    std::optional<HttpEndpoint> policy_endpoint;
    std::optional<HttpEndpoint> segmenter_endpoint;
};

nlohmann::json to_json(const LabConfig& config);
LabConfig lab_config_from_json(const nlohmann::json& doc);
/// Throws ConfigError for unreadable or invalid files.
LabConfig load_config(const std::filesystem::path& path);

} // namespace aperture
