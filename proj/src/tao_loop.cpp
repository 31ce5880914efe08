#include "aperture/tao_loop.hpp"

#include "aperture/error.hpp"

#include <algorithm>

namespace aperture {

std::string_view to_string(Phase phase) {
    switch (phase) {
    case Phase::AwaitTurn: return "await_turn";
    case Phase::AwaitToolExecution: return "await_tool_execution";
    case Phase::AwaitObservation: return "await_observation";
    case Phase::Done: return "done";
    }
    return "done";
}

std::string_view to_string(StepKind kind) {
    switch (kind) {
    case StepKind::TextOnly: return "text";
    case StepKind::Aperture: return "aperture";
    case StepKind::Answer: return "answer";
    case StepKind::Rejected: return "rejected";
    }
    return "text";
}

std::string_view to_string(Termination::Kind kind) {
    switch (kind) {
    case Termination::Kind::Answered: return "answered";
    case Termination::Kind::MaxTurns: return "max_turns";
    case Termination::Kind::Violation: return "violation";
    case Termination::Kind::BackendError: return "backend_error";
    }
    return "violation";
}

Termination::Kind termination_kind_from_string(std::string_view name) {
    for (auto k : {Termination::Kind::Answered, Termination::Kind::MaxTurns, Termination::Kind::Violation,
                   Termination::Kind::BackendError}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorKind::LogCorrupt, "unknown termination '" + std::string(name) + "'");
}

void EpisodeConfig::validate() const {
    if (max_turns < 1) throw Error(ErrorKind::ConfigError, "episode: max_turns must be at least 1");
    if (max_apertures < 0 || max_apertures > max_turns) {
        throw Error(ErrorKind::ConfigError, "episode: max_apertures must lie in [0, max_turns]");
    }
    if (min_view_pixels < 1) throw Error(ErrorKind::ConfigError, "episode: min_view_pixels must be positive");
    if (aperture.min_view_side < 1) throw Error(ErrorKind::ConfigError, "episode: min_view_side must be positive");
}

int Trajectory::aperture_count() const {
    return static_cast<int>(
        std::count_if(steps.begin(), steps.end(), [](const Step& s) { return s.kind == StepKind::Aperture; }));
}

std::shared_ptr<const Mask> final_predicted_mask(const Trajectory& trajectory) {
    for (auto it = trajectory.steps.rbegin(); it != trajectory.steps.rend(); ++it) {
        if (it->kind == StepKind::Aperture && it->mask) return it->mask;
    }
    return nullptr;
}

EpisodeState init_episode(const TaskSpec& task, const EpisodeConfig& config) {
    if (!task.image || task.image->empty()) throw Error(ErrorKind::InvalidTask, "task " + task.task_id + " has no image");
    if (task.query().empty()) throw Error(ErrorKind::InvalidTask, "task " + task.task_id + " has no query");
    EpisodeState state;
    state.task_id = task.task_id;
    state.image = task.image;
    state.query = task.query();
    state.history.push_back(Message::text(Role::System, render_system_prompt(config.variant)));
    Message user;
    user.role = Role::User;
    user.content = {ContentPart::image_part(task.image),
                    ContentPart::text_part(render_user_prompt(config.variant, task.query()))};
    state.history.push_back(std::move(user));
    return state;
}

bool expects_observation(const EpisodeState& state, const EpisodeConfig& config) {
    if (!requires_observation(config.variant)) return false;
    if (state.phase == Phase::AwaitObservation) return true;
    return state.step_index == 0 && state.apertures.empty() && config.require_initial_observation;
}

Transition advance(EpisodeState& state, const AssistantTurn& turn, const EpisodeConfig& config) {
    if (state.phase == Phase::AwaitToolExecution || state.phase == Phase::Done) {
        throw Error(ErrorKind::PhaseError, "advance called in phase " + std::string(to_string(state.phase)));
    }
    const bool needs_observation = expects_observation(state, config);
    state.history.push_back(Message::text(Role::Assistant, turn.raw));
    ++state.step_index;

    Transition out;
    auto violation = [&](ErrorKind kind) {
        state.phase = Phase::Done;
        out.kind = Transition::Kind::Violation;
        out.violation = kind;
        return out;
    };

    if (needs_observation && (!turn.observation || turn.observation->empty())) {
        if (config.on_missing_observation == ObservationPolicy::Terminate) return violation(ErrorKind::MissingObservation);
        ++state.penalties;
        out.penalized = true;
    }
    if (turn.tool_call && turn.answer) return violation(ErrorKind::ToolCallWithAnswer);
    if (turn.tool_call) {
        try {
            out.action = validate_tool_call(*turn.tool_call, config.variant).action;
        } catch (const Error& e) {
            return violation(e.kind());
        }
        state.pending = out.action;
        state.phase = Phase::AwaitToolExecution;
        out.kind = Transition::Kind::NeedToolExecution;
        return out;
    }
    if (turn.answer) {
        if (turn.answer->empty()) return violation(ErrorKind::MalformedAnswer);
        state.phase = Phase::Done;
        out.kind = Transition::Kind::Finished;
        out.answer = turn.answer;
        return out;
    }
    state.phase = Phase::AwaitTurn;
    out.kind = Transition::Kind::Continue;
    return out;
}

void attach_view(EpisodeState& state, const ApertureAction& action, const View& view, const EpisodeConfig& config) {
    if (state.phase != Phase::AwaitToolExecution) {
        throw Error(ErrorKind::PhaseError, "attach_view called in phase " + std::string(to_string(state.phase)));
    }
    if (static_cast<int>(state.apertures.size()) >= config.max_apertures) {
        throw Error(ErrorKind::ApertureBudgetExceeded,
                    "aperture budget of " + std::to_string(config.max_apertures) + " exhausted");
    }
    const long long floor_pixels = std::min(config.min_view_pixels, state.image->bounds().area());
    if (view.area() < floor_pixels) {
        throw Error(ErrorKind::DegenerateBox, "view has " + std::to_string(view.area()) + " pixels");
    }
    state.apertures.push_back({action, view});
    state.history.push_back(render_tool_result(action, view, config.variant));
    state.pending.reset();
    state.phase = requires_observation(config.variant) ? Phase::AwaitObservation : Phase::AwaitTurn;
}

std::uint64_t noise_seed_for(std::uint64_t episode_seed, const std::string& task_id, int step_index) {
    // splitmix64 over (seed, FNV-1a(task_id), step)
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : task_id) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = episode_seed ^ (h + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(step_index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

bool is_backend_failure(ErrorKind kind) {
    return kind == ErrorKind::SegmenterUnavailable || kind == ErrorKind::Timeout || kind == ErrorKind::TransportError ||
           kind == ErrorKind::RateLimited;
}

View execute_action(const ApertureAction& action, const TaskSpec& task, SegmenterBackend& segmenter,
                    const EpisodeConfig& config, int step_index, std::shared_ptr<const Mask>& full_mask) {
    const auto& image = *task.image;
    if (const auto* zoom = std::get_if<ZoomAction>(&action)) return zoom_crop(image, zoom->bbox, config.aperture);
    const auto& seg = std::get<SegmentAction>(action);
    Mask mask;
    try {
        mask = request_mask(segmenter, SegmentRequest{task.task_id, task.image, seg});
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyMask) throw;
        mask = Mask(image.width(), image.height());
    }
    full_mask = std::make_shared<const Mask>(mask);
    const NoiseSpec noise{config.aperture.noise_mean, config.aperture.noise_stddev,
                          noise_seed_for(config.seed, task.task_id, step_index)};
    return compose_segment_view(image, mask, seg.bbox, noise, config.aperture);
}

} // namespace

Trajectory run_episode(PolicyBackend& policy, SegmenterBackend& segmenter, const TaskSpec& task,
                       const EpisodeConfig& config) {
    config.validate();
    Trajectory traj;
    traj.task_id = task.task_id;
    traj.variant = config.variant;
    EpisodeState state = init_episode(task, config);

    auto terminate = [&traj](Termination::Kind kind, std::optional<ErrorKind> error, std::string detail) {
        traj.termination = Termination{kind, error, std::move(detail)};
    };
    bool done = false;

    while (!done && state.step_index < config.max_turns) {
        SamplingParams params = config.sampling;
        if (!params.seed) params.seed = config.seed;
        ChatResponse response;
        try {
            response = chat_complete(policy, ChatRequest{task.task_id, state.history, params});
        } catch (const BackendError& e) {
            traj.wall_time += e.latency();
            terminate(Termination::Kind::BackendError, e.kind(), e.what());
            break;
        }
        traj.wall_time += response.latency;

        Step step;
        step.latency = response.latency;
        step.tokens = response.token_logprobs;
        step.turn.raw = response.text;

        const bool needs_observation = expects_observation(state, config);
        try {
            try {
                step.turn = parse_assistant_turn(response.text, config.variant, needs_observation);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::MissingObservation) throw;
                step.turn = parse_assistant_turn(response.text, config.variant, false);
            }
        } catch (const Error& e) {
            state.history.push_back(Message::text(Role::Assistant, response.text));
            ++state.step_index;
            state.phase = Phase::Done;
            step.kind = StepKind::Rejected;
            step.error = e.kind();
            traj.steps.push_back(std::move(step));
            terminate(Termination::Kind::Violation, e.kind(), e.what());
            break;
        }

        const Transition t = advance(state, step.turn, config);
        step.penalized = t.penalized;
        switch (t.kind) {
        case Transition::Kind::Violation:
            step.kind = StepKind::Rejected;
            step.error = t.violation;
            traj.steps.push_back(std::move(step));
            terminate(Termination::Kind::Violation, t.violation, std::string(to_string(*t.violation)));
            done = true;
            break;
        case Transition::Kind::Finished:
            step.kind = StepKind::Answer;
            step.answer = t.answer;
            traj.final_answer = t.answer;
            traj.steps.push_back(std::move(step));
            terminate(Termination::Kind::Answered, std::nullopt, {});
            done = true;
            break;
        case Transition::Kind::Continue:
            step.kind = StepKind::TextOnly;
            traj.steps.push_back(std::move(step));
            break;
        case Transition::Kind::NeedToolExecution: {
            step.action = t.action;
            try {
                const View view = execute_action(*t.action, task, segmenter, config, state.step_index, step.mask);
                attach_view(state, *t.action, view, config);
                step.kind = StepKind::Aperture;
                step.view = view;
                step.env_tokens = count_tokens(state.history.back());
                traj.steps.push_back(std::move(step));
            } catch (const Error& e) {
                state.phase = Phase::Done;
                step.kind = StepKind::Rejected;
                step.error = e.kind();
                step.mask.reset();
                traj.steps.push_back(std::move(step));
                terminate(is_backend_failure(e.kind()) ? Termination::Kind::BackendError : Termination::Kind::Violation,
                          e.kind(), e.what());
                done = true;
            }
            break;
        }
        }
    }
    if (!done && traj.termination.kind == Termination::Kind::MaxTurns && state.step_index >= config.max_turns) {
        terminate(Termination::Kind::MaxTurns, std::nullopt, "turn budget of " + std::to_string(config.max_turns) + " exhausted");
    }
    traj.penalties = state.penalties;
    return traj;
}

} // namespace aperture
