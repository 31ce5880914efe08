#pragma once

// The think / aperture / observe episode state machine.

#include "aperture/backends.hpp"
#include "aperture/protocol.hpp"
#include "aperture/reward.hpp"
#include "aperture/task.hpp"
#include "aperture/views.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aperture {

enum class Phase { AwaitTurn, AwaitToolExecution, AwaitObservation, Done };
enum class ObservationPolicy { Terminate, Penalize };

std::string_view to_string(Phase phase);

struct EpisodeConfig {
    PromptVariant variant = PromptVariant::Full;
    int max_turns = 8;
    int max_apertures = 6;
    ObservationPolicy on_missing_observation = ObservationPolicy::Terminate;
    std::uint64_t seed = 0;
    long long min_view_pixels = 64;
    /// Under the full variant, also demand a description in the first turn.
    bool require_initial_observation = true;
    ApertureConfig aperture;
    SamplingParams sampling;

    void validate() const;
};

struct ApertureRecord {
    ApertureAction action;
    View view;
};

struct EpisodeState {
    std::string task_id;
    std::shared_ptr<const Image> image;
    std::string query;
    std::vector<Message> history;
    std::vector<ApertureRecord> apertures;
    int step_index = 0;
    Phase phase = Phase::AwaitTurn;
    std::optional<ApertureAction> pending;
    int penalties = 0;
};

struct Transition {
    enum class Kind { NeedToolExecution, Finished, Continue, Violation };

    Kind kind = Kind::Continue;
    std::optional<ApertureAction> action;
    std::optional<std::string> answer;
    std::optional<ErrorKind> violation;
    bool penalized = false;
};

enum class StepKind { TextOnly, Aperture, Answer, Rejected };

std::string_view to_string(StepKind kind);

struct Step {
    StepKind kind = StepKind::TextOnly;
    std::optional<ApertureAction> action;
    std::optional<std::string> answer;
    std::optional<View> view;
    /// Full-resolution mask returned by the segmenter, for segment steps.
    std::shared_ptr<const Mask> mask;
    AssistantTurn turn;
    Seconds latency{0};
    /// Generated tokens, when the backend reported them.
    std::optional<std::vector<TokenLogprob>> tokens;
    /// Tokens of the tool-result message injected after this step.
    int env_tokens = 0;
    bool penalized = false;
    std::optional<ErrorKind> error;
};

struct Termination {
    enum class Kind { Answered, MaxTurns, Violation, BackendError };

    Kind kind = Kind::MaxTurns;
    std::optional<ErrorKind> error;
    std::string detail;
};

std::string_view to_string(Termination::Kind kind);
Termination::Kind termination_kind_from_string(std::string_view name);

struct Trajectory {
    std::string task_id;
    PromptVariant variant = PromptVariant::Full;
    std::vector<Step> steps;
    std::optional<std::string> final_answer;
    Termination termination;
    std::optional<RewardBreakdown> reward;
    Seconds wall_time{0};
    int penalties = 0;

    int aperture_count() const;
};

/// Mask of the last segment step, if any.
std::shared_ptr<const Mask> final_predicted_mask(const Trajectory& trajectory);

EpisodeState init_episode(const TaskSpec& task, const EpisodeConfig& config);

/// Whether the next assistant turn must open with a description.
bool expects_observation(const EpisodeState& state, const EpisodeConfig& config);

/// Applies one parsed assistant turn. The turn's raw text joins the history.
Transition advance(EpisodeState& state, const AssistantTurn& turn, const EpisodeConfig& config);

/// Records an executed aperture and appends its tool-result message.
void attach_view(EpisodeState& state, const ApertureAction& action, const View& view, const EpisodeConfig& config);

/// Drives the policy until it answers, runs out of turns, violates the
/// protocol, or a backend fails. Never throws for backend failures.
Trajectory run_episode(PolicyBackend& policy, SegmenterBackend& segmenter, const TaskSpec& task,
                       const EpisodeConfig& config);

/// Seed for the noise field of the aperture executed at `step_index`.
std::uint64_t noise_seed_for(std::uint64_t episode_seed, const std::string& task_id, int step_index);

} // namespace aperture
