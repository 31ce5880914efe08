#include "aperture/protocol.hpp"

#include "aperture/error.hpp"

#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

namespace aperture {

namespace {

constexpr std::string_view kToolOpen = "<tool_call>";
constexpr std::string_view kToolClose = "</tool_call>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::size_t> find_all(std::string_view text, std::string_view needle) {
    std::vector<std::size_t> hits;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
        hits.push_back(pos);
    }
    return hits;
}

struct TagSpan {
    std::size_t open = std::string_view::npos;
    std::string_view inner;
};

// Locates a single open/close pair; zero pairs yields an unset span.
std::optional<TagSpan> find_pair(std::string_view text, std::string_view open, std::string_view close,
                                 ErrorKind multiple, ErrorKind malformed) {
    const auto opens = find_all(text, open);
    const auto closes = find_all(text, close);
    if (opens.size() > 1 || closes.size() > 1) throw Error(multiple, "more than one " + std::string(open) + " block");
    if (opens.size() != closes.size()) throw Error(malformed, "unbalanced " + std::string(open) + " block");
    if (opens.empty()) return std::nullopt;
    const auto start = opens.front() + open.size();
    if (closes.front() < start) throw Error(malformed, std::string(close) + " precedes its opening tag");
    return TagSpan{opens.front(), text.substr(start, closes.front() - start)};
}

const std::regex& thinking_marker() {
    static const std::regex re(R"(^[\s#>*_\-]*(thinking|thought|reasoning)\b)", std::regex::icase);
    return re;
}

ToolCallPayload parse_payload(std::string_view inner) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(trim(inner));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedToolCall, std::string("payload is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::MalformedToolCall, "payload must be a JSON object");
    const auto name = doc.find("name");
    if (name == doc.end() || !name->is_string()) throw Error(ErrorKind::MalformedToolCall, "payload lacks a string \"name\"");
    const auto args = doc.find("arguments");
    if (args == doc.end() || !args->is_object()) {
        throw Error(ErrorKind::MalformedToolCall, "payload lacks an object \"arguments\"");
    }
    return {name->get<std::string>(), *args};
}

std::string format_number(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

std::string format_bbox(const NormalizedBBox& b) {
    return "[" + format_number(b.x1) + ", " + format_number(b.y1) + ", " + format_number(b.x2) + ", " +
           format_number(b.y2) + "]";
}

std::string format_rect(const PixelRect& r) {
    std::ostringstream os;
    os << "(" << r.x << ", " << r.y << ", " << r.width << "x" << r.height << ")";
    return os.str();
}

double require_number(const nlohmann::json& v, std::string_view what) {
    if (!v.is_number()) throw Error(ErrorKind::SchemaViolation, std::string(what) + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorKind::SchemaViolation, std::string(what) + " must be finite");
    return d;
}

NormalizedBBox require_bbox(const nlohmann::json& args) {
    const auto it = args.find("bbox");
    if (it == args.end()) throw Error(ErrorKind::SchemaViolation, "missing required field bbox");
    if (!it->is_array() || it->size() != 4) throw Error(ErrorKind::SchemaViolation, "bbox must have exactly 4 entries");
    return {require_number((*it)[0], "bbox[0]"), require_number((*it)[1], "bbox[1]"), require_number((*it)[2], "bbox[2]"),
            require_number((*it)[3], "bbox[3]")};
}

std::optional<std::string> optional_label(const nlohmann::json& args) {
    const auto it = args.find("obj_label");
    if (it == args.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorKind::SchemaViolation, "obj_label must be a string");
    return it->get<std::string>();
}

void collect_unknown(const nlohmann::json& args, const std::set<std::string>& known, const std::string& tool,
                     std::vector<std::string>& warnings) {
    for (const auto& [key, value] : args.items()) {
        if (!known.contains(key)) warnings.push_back("ignored unknown argument '" + key + "' for " + tool);
    }
}

} // namespace

std::string_view to_string(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

std::string Message::text_content() const {
    std::string out;
    for (const auto& part : content) {
        if (part.kind == ContentPart::Kind::Text) out += part.text;
    }
    return out;
}

int count_tokens(const Message& message) {
    int n = 0;
    for (const auto& part : message.content) {
        if (part.kind == ContentPart::Kind::Image) {
            ++n;
            continue;
        }
        std::istringstream words(part.text);
        std::string w;
        while (words >> w) ++n;
    }
    return n;
}

AssistantTurn parse_assistant_turn(std::string_view text, PromptVariant variant, bool expects_observation) {
    if (trim(text).empty()) throw Error(ErrorKind::EmptyTurn, "assistant turn is empty");

    const auto tool = find_pair(text, kToolOpen, kToolClose, ErrorKind::MultipleToolCalls, ErrorKind::MalformedToolCall);
    const auto answer = find_pair(text, kAnswerOpen, kAnswerClose, ErrorKind::MultipleAnswers, ErrorKind::MalformedAnswer);
    if (tool && answer) throw Error(ErrorKind::ToolCallWithAnswer, "a turn may carry a tool call or an answer, not both");

    AssistantTurn turn;
    turn.raw = std::string(text);
    if (tool) turn.tool_call = parse_payload(tool->inner);
    if (answer) turn.answer = std::string(trim(answer->inner));

    std::size_t first_tag = text.size();
    if (tool) first_tag = tool->open;
    if (answer) first_tag = answer->open;
    const std::string_view prose = trim(text.substr(0, first_tag));

    if (!(expects_observation && requires_observation(variant))) {
        turn.thinking = std::string(prose);
        return turn;
    }

    // Observation runs up to the first line that opens the thinking section.
    std::size_t marker = prose.size();
    std::size_t line_start = 0;
    while (line_start < prose.size()) {
        auto line_end = prose.find('\n', line_start);
        if (line_end == std::string_view::npos) line_end = prose.size();
        const std::string line(prose.substr(line_start, line_end - line_start));
        if (std::regex_search(line, thinking_marker())) {
            marker = line_start;
            break;
        }
        line_start = line_end + 1;
    }
    const auto observation = trim(prose.substr(0, marker));
    if (observation.empty()) throw Error(ErrorKind::MissingObservation, "turn does not open with a description of the view");
    turn.observation = std::string(observation);
    turn.thinking = std::string(trim(prose.substr(marker)));
    return turn;
}

std::string render_assistant_turn(const AssistantTurn& turn) {
    std::string out;
    auto paragraph = [&out](std::string_view s, std::string_view sep) {
        if (s.empty()) return;
        if (!out.empty()) out += sep;
        out += s;
    };
    if (turn.observation) paragraph(*turn.observation, "\n\n");
    paragraph(turn.thinking, "\n\n");
    if (turn.tool_call) {
        std::string payload = "{\"name\": " + nlohmann::json(turn.tool_call->name).dump() +
                              ", \"arguments\": " + turn.tool_call->arguments.dump() + "}";
        paragraph(std::string(kToolOpen) + "\n" + payload + "\n" + std::string(kToolClose), "\n");
    }
    if (turn.answer) paragraph(std::string(kAnswerOpen) + *turn.answer + std::string(kAnswerClose), "\n");
    return out;
}

ValidatedCall validate_tool_call(const ToolCallPayload& payload, PromptVariant variant) {
    const auto& args = payload.arguments;
    if (!args.is_object()) throw Error(ErrorKind::SchemaViolation, "arguments must be an object");
    ValidatedCall out;

    if (payload.name == kZoomToolName) {
        if (!allows_zoom(variant)) throw Error(ErrorKind::VariantViolation, "zoom is disabled for this variant");
        collect_unknown(args, {"bbox", "obj_label"}, payload.name, out.warnings);
        out.action = ZoomAction{require_bbox(args), optional_label(args)};
        return out;
    }
    if (payload.name != kSegmentToolName) throw Error(ErrorKind::UnknownTool, "unknown tool '" + payload.name + "'");
    if (!allows_segment(variant)) throw Error(ErrorKind::VariantViolation, "segmentation is disabled for this variant");
    collect_unknown(args, {"bbox", "points", "labels", "obj_label"}, payload.name, out.warnings);

    SegmentAction action;
    action.bbox = require_bbox(args);
    const auto points = args.find("points");
    const auto labels = args.find("labels");
    if (points == args.end()) throw Error(ErrorKind::SchemaViolation, "missing required field points");
    if (labels == args.end()) throw Error(ErrorKind::SchemaViolation, "missing required field labels");
    if (!points->is_array() || points->empty()) throw Error(ErrorKind::SchemaViolation, "points must be a nonempty array");
    if (!labels->is_array()) throw Error(ErrorKind::SchemaViolation, "labels must be an array");
    if (labels->size() != points->size()) throw Error(ErrorKind::SchemaViolation, "points and labels differ in length");
    for (std::size_t i = 0; i < points->size(); ++i) {
        const auto& p = (*points)[i];
        if (!p.is_array() || p.size() != 2) throw Error(ErrorKind::SchemaViolation, "each point must be [x, y]");
        const auto& l = (*labels)[i];
        if (!l.is_number_integer()) throw Error(ErrorKind::SchemaViolation, "labels must be integers");
        const auto label = l.get<long long>();
        if (label != 0 && label != 1) throw Error(ErrorKind::SchemaViolation, "labels must be 0 or 1");
        PointPrompt pt{require_number(p[0], "point x"), require_number(p[1], "point y"), static_cast<int>(label)};
        if (pt.x < 0 || pt.x > 1000 || pt.y < 0 || pt.y > 1000) {
            throw Error(ErrorKind::SchemaViolation, "point outside the [0,1000] frame");
        }
        action.points.push_back(pt);
    }
    action.obj_label = optional_label(args);
    out.action = std::move(action);
    return out;
}

ToolCallPayload to_payload(const ApertureAction& action) {
    const auto& b = bbox_of(action);
    nlohmann::json args = nlohmann::json::object();
    args["bbox"] = {b.x1, b.y1, b.x2, b.y2};
    if (const auto* seg = std::get_if<SegmentAction>(&action)) {
        auto points = nlohmann::json::array();
        auto labels = nlohmann::json::array();
        for (const auto& p : seg->points) {
            points.push_back({p.x, p.y});
            labels.push_back(p.label);
        }
        args["points"] = points;
        args["labels"] = labels;
        if (seg->obj_label) args["obj_label"] = *seg->obj_label;
        return {std::string(kSegmentToolName), args};
    }
    const auto& zoom = std::get<ZoomAction>(action);
    if (zoom.obj_label) args["obj_label"] = *zoom.obj_label;
    return {std::string(kZoomToolName), args};
}

Message render_tool_result(const ApertureAction& action, const View& view, PromptVariant variant) {
    if (!view.pixels || view.area() == 0) throw Error(ErrorKind::InternalError, "cannot render a view with no pixels");
    std::string caption;
    bool empty_mask = false;
    if (const auto* seg = std::get_if<SegmentAction>(&action)) {
        caption = std::string(kSegmentToolName) + " result: bbox=" + format_bbox(seg->bbox) + " points=[";
        for (std::size_t i = 0; i < seg->points.size(); ++i) {
            if (i > 0) caption += ", ";
            caption += "[" + format_number(seg->points[i].x) + ", " + format_number(seg->points[i].y) + "]";
        }
        caption += "] labels=[";
        for (std::size_t i = 0; i < seg->points.size(); ++i) {
            if (i > 0) caption += ", ";
            caption += std::to_string(seg->points[i].label);
        }
        caption += "]";
        if (seg->obj_label) caption += " obj_label=" + nlohmann::json(*seg->obj_label).dump();
        if (const auto* comp = std::get_if<SegmentComposite>(&view.provenance)) empty_mask = comp->empty_mask;
    } else {
        const auto& zoom = std::get<ZoomAction>(action);
        caption = std::string(kZoomToolName) + " result: bbox=" + format_bbox(zoom.bbox);
        if (zoom.obj_label) caption += " obj_label=" + nlohmann::json(*zoom.obj_label).dump();
    }
    caption += " region=" + format_rect(view.rect());
    if (empty_mask) caption += "\nThe segmentation mask was empty; the view shows background noise only.";
    if (requires_observation(variant)) caption += "\nDescribe what you observe in this view first.";

    Message msg;
    msg.role = Role::User;
    msg.tool_result = true;
    msg.content = {ContentPart::image_part(view.pixels), ContentPart::text_part(std::move(caption))};
    msg.view = ViewInfo{view.rect(), view.mask, empty_mask};
    return msg;
}

} // namespace aperture
