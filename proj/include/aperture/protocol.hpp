#pragma once

// Prompt rendering and assistant-turn parsing for the two-tool aperture
// protocol (`<tool_call>` JSON payloads and `<answer>` blocks).

#include "aperture/message.hpp"
#include "aperture/views.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aperture {

enum class PromptVariant { Full, NoObservation, ZoomOnly, SegmentOnly };

inline constexpr std::string_view kZoomToolName = "image_zoom_in_tool";
inline constexpr std::string_view kSegmentToolName = "image_segment_tool";

/// Accepts "full", "no-observation", "zoom-only", "segment-only" and the
/// training-free alias "no-grpo" (which renders the full prompts).
PromptVariant parse_variant(std::string_view name);
std::string_view to_string(PromptVariant variant);

bool allows_zoom(PromptVariant variant);
bool allows_segment(PromptVariant variant);
bool requires_observation(PromptVariant variant);

std::string render_system_prompt(PromptVariant variant);
/// The instruction block without the task question.
std::string_view user_prompt_template(PromptVariant variant);
/// Instruction block, a blank line, then the question. Throws InvalidTask on an empty question.
std::string render_user_prompt(PromptVariant variant, std::string_view task_question);

struct ToolCallPayload {
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();

    friend bool operator==(const ToolCallPayload&, const ToolCallPayload&) = default;
};

struct AssistantTurn {
    std::optional<std::string> observation;
    std::string thinking;
    std::optional<ToolCallPayload> tool_call;
    std::optional<std::string> answer;
    std::string raw;

    bool same_fields(const AssistantTurn& other) const {
        return observation == other.observation && thinking == other.thinking && tool_call == other.tool_call &&
               answer == other.answer;
    }
};

/// Observation is the prose before the first "Thinking"-style line or the
/// first tag; it is only extracted under the full variant when
/// `expects_observation` is set.
AssistantTurn parse_assistant_turn(std::string_view text, PromptVariant variant, bool expects_observation);

/// Canonical text form; parse_assistant_turn inverts it field-wise.
std::string render_assistant_turn(const AssistantTurn& turn);

struct ValidatedCall {
    ApertureAction action;
    std::vector<std::string> warnings;
};

ValidatedCall validate_tool_call(const ToolCallPayload& payload, PromptVariant variant);

/// Builds the payload a policy would emit for an action.
ToolCallPayload to_payload(const ApertureAction& action);

/// User-role message carrying the view image and a fixed caption.
Message render_tool_result(const ApertureAction& action, const View& view, PromptVariant variant);

} // namespace aperture
