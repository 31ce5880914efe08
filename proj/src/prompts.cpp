#include "aperture/protocol.hpp"

#include "aperture/error.hpp"

namespace aperture {

namespace {

constexpr std::string_view kFullSystem = R"PROMPT(You are a helpful assistant 
# Tools
You may call the segmentation or zoom function to extract specific regions from images.
Function signature provided within <tools></tools> XML tags:

<tools>
{"type": "function", "function": {"name": "image_segment_tool",
"description": "Generate a segmentation mask for specified region, mask non-target areas as Gaussian noise, and crop using bounding box",
"parameters": {"type": "object", "properties": {
"bbox": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4,
"description": "Bounding box as [x1, y1, x2, y2]"},
"points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
"description": "List of point coordinates"},
"labels": {"type": "array", "items": {"type": "integer"},
"description": "Labels for each point (1=foreground, 0=background)"},
"obj_label": {"type": "string", "description": "Optional object name"}},
"required": ["bbox", "points", "labels"]}}}
</tools>

<tools>
{"type":"function","function":{"name":"image_zoom_in_tool",
"description":"Zoom in on a specific region of an image by cropping it based on a bounding box",
"parameters":{"type":"object","properties":{
"bbox":{"type":"array","items":{"type":"number"},"minItems":4,"maxItems":4,
"description":"Bounding box [x1, y1, x2, y2]"},
"obj_label":{"type":"string","description":"Optional object name"}},
"required":["bbox"]}}}
</tools>

# How to call a tool
Return a json object with function name and arguments inside <tool_call></tool_call>:

<tool_call>
{"name": <function-name>, "arguments": <args-json-object>}
</tool_call>

Examples:
<tool_call>
{"name": "image_segment_tool",
"arguments": {"bbox": [100, 80, 450, 400],
"points": [[300, 180], [280, 200]], "labels": [1, 0], "obj_label": "Cat"}}
</tool_call>

<tool_call>
{"name": "image_zoom_in_tool",
"arguments": {"bbox": [10, 20, 100, 200], "obj_label": "the apple on the desk"}}
</tool_call>

# Tool Rules
- Only one tool can be called per turn.
- You must print your thinking process step by step before calling a tool.

Think first, call **image_segment_tool** or **image_zoom_in_tool** if needed, then answer.)PROMPT";

constexpr std::string_view kFullUser = R"PROMPT(Describe what you observe in this response first, then think step by step.
Call **image_segment_tool** or **image_zoom_in_tool** if needed, then answer.

Format as:
Image Description here...
Thinking Process here...
<tool_call>...</tool_call> (if tools needed)
<answer>(If no tools needed, Answer here...) </answer>)PROMPT";

constexpr std::string_view kNoObservationUser = R"PROMPT(Think step by step first, call **image_segment_tool** or **image_zoom_in_tool** if needed, then answer.

Format as:
(Thinking Process)
<tool_call>...</tool_call> (if tools needed)
<answer>(If no tools needed, Answer here...) </answer>)PROMPT";

constexpr std::string_view kZoomSystem = R"PROMPT(You are a helpful assistant 
# Tools
You may call the zoom function to extract specific regions from images.
Function signature provided within <tools></tools>:

<tools>
{"type":"function","function":{"name":"image_zoom_in_tool",
"description":"Zoom in on a region by cropping with a bounding box",
"parameters":{"type":"object","properties":{
"bbox":{"type":"array","items":{"type":"number"},"minItems":4,"maxItems":4,
"description":"Bounding box [x1, y1, x2, y2]"},
"obj_label":{"type":"string","description":"Optional object name"}},
"required":["bbox"]}}}
</tools>

# Tool Rules
- Only one tool can be called per turn.
- You must print your thinking process step by step before calling a tool.

Think first, call **image_zoom_in_tool** if needed, then answer.)PROMPT";

constexpr std::string_view kZoomUser = R"PROMPT(Think step by step first, call **image_zoom_in_tool** if needed, then answer.

Format as:
(Thinking Process)
<tool_call>...</tool_call>
<answer>(If no tools needed, Answer here...) </answer>)PROMPT";

constexpr std::string_view kSegmentSystem = R"PROMPT(You are a helpful assistant 
# Tools
You may call the segmentation function to extract specific regions from images.
Function signature provided within <tools></tools>:

<tools>
{"type": "function", "function": {"name": "image_segment_tool",
"description": "Generate a segmentation mask for specified region",
"parameters": {"type": "object", "properties": {
"bbox": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
"points": {"type": "array"},
"labels": {"type": "array"},
"obj_label": {"type": "string"}},
"required":["bbox","points","labels"]}}}
</tools>

# Tool Rules
- Only one tool can be called per turn.
- You must print your thinking process step by step before calling a tool.

Think first, call **image_segment_tool** if needed, then answer.)PROMPT";

constexpr std::string_view kSegmentUser = R"PROMPT(Think step by step first, call **image_segment_tool** if needed, then answer.

Format as:
(Thinking Process)
<tool_call>...</tool_call>
<answer>(If no tools needed, Answer here...) </answer>)PROMPT";

} // namespace

PromptVariant parse_variant(std::string_view name) {
    if (name == "full" || name == "no-grpo") return PromptVariant::Full;
    if (name == "no-observation") return PromptVariant::NoObservation;
    if (name == "zoom-only") return PromptVariant::ZoomOnly;
    if (name == "segment-only") return PromptVariant::SegmentOnly;
    throw Error(ErrorKind::ConfigError, "unknown prompt variant '" + std::string(name) + "'");
}

std::string_view to_string(PromptVariant variant) {
    switch (variant) {
    case PromptVariant::Full: return "full";
    case PromptVariant::NoObservation: return "no-observation";
    case PromptVariant::ZoomOnly: return "zoom-only";
    case PromptVariant::SegmentOnly: return "segment-only";
    }
    return "full";
}

bool allows_zoom(PromptVariant variant) { return variant != PromptVariant::SegmentOnly; }
bool allows_segment(PromptVariant variant) { return variant != PromptVariant::ZoomOnly; }
bool requires_observation(PromptVariant variant) { return variant == PromptVariant::Full; }

std::string render_system_prompt(PromptVariant variant) {
    switch (variant) {
    case PromptVariant::Full:
    case PromptVariant::NoObservation: return std::string(kFullSystem);
    case PromptVariant::ZoomOnly: return std::string(kZoomSystem);
    case PromptVariant::SegmentOnly: return std::string(kSegmentSystem);
    }
    return std::string(kFullSystem);
}

std::string_view user_prompt_template(PromptVariant variant) {
    switch (variant) {
    case PromptVariant::Full: return kFullUser;
    case PromptVariant::NoObservation: return kNoObservationUser;
    case PromptVariant::ZoomOnly: return kZoomUser;
    case PromptVariant::SegmentOnly: return kSegmentUser;
    }
    return kFullUser;
}

std::string render_user_prompt(PromptVariant variant, std::string_view task_question) {
    if (task_question.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw Error(ErrorKind::InvalidTask, "task question is empty");
    }
    std::string out(user_prompt_template(variant));
    out += "\n\n";
    out += task_question;
    return out;
}

} // namespace aperture
