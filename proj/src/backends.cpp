#include "aperture/backends.hpp"

#include "aperture/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace aperture {

namespace {

using Clock = std::chrono::steady_clock;

Seconds since(Clock::time_point start) { return Clock::now() - start; }

// One POST with retries on transport failures, 429 and 5xx. Throws
// BackendError with `failure_kind` (or RateLimited/Timeout when applicable).
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& payload, ErrorKind failure_kind,
                         Clock::time_point start) {
    const auto body = payload.dump();
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(Seconds(endpoint.timeout_seconds));
    ErrorKind last_kind = failure_kind;
    std::string last_message = "no attempts made";
    for (int attempt = 0; attempt < std::max(1, endpoint.max_attempts); ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(Seconds(endpoint.backoff_seconds * std::pow(2.0, attempt - 1)));
        }
        httplib::Client client(endpoint.base_url);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto res = client.Post(endpoint.path, body, "application/json");
        if (!res) {
            const auto err = res.error();
            last_kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) ? ErrorKind::Timeout
                                                                                                   : failure_kind;
            last_message = "request to " + endpoint.base_url + endpoint.path + " failed: " + httplib::to_string(err);
            continue;
        }
        if (res->status == 429) {
            last_kind = ErrorKind::RateLimited;
            last_message = "service returned 429";
            continue;
        }
        if (res->status >= 500) {
            last_kind = failure_kind;
            last_message = "service returned " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendError(failure_kind, "service returned " + std::to_string(res->status), since(start));
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(failure_kind, std::string("response is not JSON: ") + e.what(), since(start));
        }
    }
    if (failure_kind == ErrorKind::SegmenterUnavailable) last_kind = ErrorKind::SegmenterUnavailable;
    throw BackendError(last_kind, last_message + " after " + std::to_string(endpoint.max_attempts) + " attempt(s)",
                       since(start));
}

int count_assistant_turns(std::span<const Message> messages) {
    return static_cast<int>(
        std::count_if(messages.begin(), messages.end(), [](const Message& m) { return m.role == Role::Assistant; }));
}

} // namespace

ChatResponse chat_complete(PolicyBackend& backend, const ChatRequest& request) {
    const auto start = Clock::now();
    try {
        return backend.complete(request);
    } catch (const BackendError&) {
        throw;
    } catch (const Error& e) {
        throw BackendError(e.kind(), e.what(), since(start));
    }
}

// ---------------------------------------------------------------------------

std::vector<TokenLogprob> deterministic_tokens(std::string_view text) {
    std::vector<TokenLogprob> tokens;
    std::istringstream words{std::string(text)};
    std::string w;
    while (words >> w) tokens.push_back({w, 0.0});
    return tokens;
}

ScriptedPolicy::ScriptedPolicy(std::vector<ScriptTurn> turns, Fallback fallback, std::string fallback_answer)
    : turns_(std::move(turns)), fallback_(fallback), fallback_answer_(std::move(fallback_answer)) {
    std::stable_sort(turns_.begin(), turns_.end(), [](const ScriptTurn& a, const ScriptTurn& b) {
        return a.task_id != b.task_id ? a.task_id < b.task_id : a.turn_index < b.turn_index;
    });
    for (std::size_t i = 0; i < turns_.size(); ++i) by_task_[turns_[i].task_id].push_back(i);
}

ChatResponse ScriptedPolicy::complete(const ChatRequest& request) {
    const int index = count_assistant_turns(request.messages);
    const auto it = by_task_.find(request.task_id);
    const ScriptTurn* chosen = nullptr;
    if (it != by_task_.end()) {
        for (const auto i : it->second) {
            if (turns_[i].turn_index == index) chosen = &turns_[i];
        }
        if (chosen == nullptr && fallback_ == Fallback::Loop && !it->second.empty()) {
            chosen = &turns_[it->second[static_cast<std::size_t>(index) % it->second.size()]];
        }
    }
    ChatResponse out;
    if (chosen != nullptr) {
        out.text = chosen->text;
        out.latency = chosen->latency;
    } else if (fallback_ == Fallback::Answer) {
        out.text = "<answer>" + fallback_answer_ + "</answer>";
    } else {
        throw BackendError(ErrorKind::InternalError, "no scripted turns for task '" + request.task_id + "'", Seconds{0});
    }
    out.token_logprobs = deterministic_tokens(out.text);
    return out;
}

ScriptedPolicy parse_script(std::string_view content, PromptVariant variant) {
    std::vector<ScriptTurn> turns;
    auto fallback = ScriptedPolicy::Fallback::Loop;
    std::string fallback_answer;
    std::istringstream lines{std::string(content)};
    std::string line;
    int record = 0;
    while (std::getline(lines, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const int index = record++;
        auto fail = [index](const std::string& why) {
            return Error(ErrorKind::ScriptParseError, "turn " + std::to_string(index) + ": " + why);
        };
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
        if (!doc.is_object()) throw fail("record is not an object");
        if (doc.contains("fallback")) {
            const auto& f = doc["fallback"];
            if (f == "loop") {
                fallback = ScriptedPolicy::Fallback::Loop;
            } else if (f.is_object() && f.contains("answer") && f["answer"].is_string()) {
                fallback = ScriptedPolicy::Fallback::Answer;
                fallback_answer = f["answer"].get<std::string>();
            } else {
                throw fail("fallback must be \"loop\" or {\"answer\": text}");
            }
            continue;
        }
        ScriptTurn turn;
        try {
            turn.task_id = doc.at("task_id").get<std::string>();
            turn.turn_index = doc.at("turn_index").get<int>();
            turn.text = doc.at("text").get<std::string>();
            if (doc.contains("latency")) turn.latency = Seconds(doc["latency"].get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
        try {
            const auto parsed = parse_assistant_turn(turn.text, variant, false);
            if (parsed.tool_call) validate_tool_call(*parsed.tool_call, variant);
        } catch (const Error& e) {
            throw fail(e.what());
        }
        turns.push_back(std::move(turn));
    }
    if (turns.empty()) throw Error(ErrorKind::ScriptParseError, "turn 0: script contains no turns");
    return ScriptedPolicy(std::move(turns), fallback, std::move(fallback_answer));
}

ScriptedPolicy load_script(const std::filesystem::path& path, PromptVariant variant) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ScriptParseError, "cannot open script " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_script(buffer.str(), variant);
}

// ---------------------------------------------------------------------------

nlohmann::json messages_to_wire(std::span<const Message> messages) {
    auto out = nlohmann::json::array();
    for (const auto& m : messages) {
        auto content = nlohmann::json::array();
        for (const auto& part : m.content) {
            if (part.kind == ContentPart::Kind::Text) {
                content.push_back({{"type", "text"}, {"text", part.text}});
            } else {
                content.push_back({{"type", "image"}, {"data", base64_encode(encode_png(*part.image))}});
            }
        }
        out.push_back({{"role", std::string(to_string(m.role))}, {"content", std::move(content)}});
    }
    return out;
}

RemotePolicy::RemotePolicy(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

ChatResponse RemotePolicy::complete(const ChatRequest& request) {
    const auto start = Clock::now();
    nlohmann::json payload{{"messages", messages_to_wire(request.messages)},
                           {"temperature", request.params.temperature},
                           {"max_tokens", request.params.max_tokens}};
    payload["seed"] = request.params.seed ? nlohmann::json(*request.params.seed) : nlohmann::json(nullptr);
    const auto body = post_json(endpoint_, payload, ErrorKind::TransportError, start);
    ChatResponse out;
    try {
        out.text = body.at("text").get<std::string>();
        if (body.contains("token_logprobs") && !body["token_logprobs"].is_null()) {
            std::vector<TokenLogprob> tokens;
            for (const auto& t : body["token_logprobs"]) {
                tokens.push_back({t.at("token").get<std::string>(), t.at("logp").get<double>()});
            }
            out.token_logprobs = std::move(tokens);
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(ErrorKind::TransportError, std::string("malformed response: ") + e.what(), since(start));
    }
    out.latency = since(start);
    return out;
}

nlohmann::json segment_request_to_wire(const SegmentRequest& request) {
    const auto& b = request.action.bbox;
    auto points = nlohmann::json::array();
    auto labels = nlohmann::json::array();
    for (const auto& p : request.action.points) {
        points.push_back({p.x, p.y});
        labels.push_back(p.label);
    }
    return {{"image", base64_encode(encode_png(*request.image))},
            {"bbox", {b.x1, b.y1, b.x2, b.y2}},
            {"points", std::move(points)},
            {"labels", std::move(labels)}};
}

Mask segment_response_from_wire(const nlohmann::json& response) {
    const auto it = response.find("mask");
    if (it == response.end() || !it->is_string()) {
        throw Error(ErrorKind::SegmenterUnavailable, "segmenter response lacks a mask");
    }
    try {
        return decode_mask_png(base64_decode(it->get<std::string>()));
    } catch (const Error& e) {
        throw Error(ErrorKind::SegmenterUnavailable, std::string("undecodable mask: ") + e.what());
    }
}

RemoteSegmenter::RemoteSegmenter(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

Mask RemoteSegmenter::segment(const SegmentRequest& request) {
    const auto start = Clock::now();
    const auto body = post_json(endpoint_, segment_request_to_wire(request), ErrorKind::SegmenterUnavailable, start);
    try {
        return segment_response_from_wire(body);
    } catch (const Error& e) {
        throw BackendError(e.kind(), e.what(), since(start));
    }
}

// ---------------------------------------------------------------------------

void GeometricOracle::register_scene(const std::string& image_id, std::shared_ptr<const SyntheticScene> scene) {
    std::lock_guard lock(mutex_);
    scenes_[image_id] = std::move(scene);
}

Mask GeometricOracle::segment(const SegmentRequest& request) {
    std::shared_ptr<const SyntheticScene> scene;
    {
        std::lock_guard lock(mutex_);
        const auto it = scenes_.find(request.image_id);
        if (it == scenes_.end()) {
            throw Error(ErrorKind::SegmenterUnavailable, "no scene registered for image '" + request.image_id + "'");
        }
        scene = it->second;
    }
    return oracle_mask(*scene, request.action);
}

Mask oracle_mask(const SyntheticScene& scene, const SegmentAction& action) {
    const auto& b = action.bbox;
    std::vector<bool> selected(scene.shapes.size(), false);
    std::vector<bool> excluded(scene.shapes.size(), false);
    for (const auto& p : action.points) {
        if (p.x < b.x1 || p.x > b.x2 || p.y < b.y1 || p.y > b.y2) continue;
        const int px = std::clamp(static_cast<int>(std::floor(p.x * scene.width / 1000.0)), 0, scene.width - 1);
        const int py = std::clamp(static_cast<int>(std::floor(p.y * scene.height / 1000.0)), 0, scene.height - 1);
        if (const auto hit = shape_at(scene, px, py)) (p.label == 1 ? selected : excluded)[*hit] = true;
    }
    Mask mask(scene.width, scene.height);
    for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
        if (!selected[i] || excluded[i]) continue;
        for (int y = 0; y < scene.height; ++y) {
            for (int x = 0; x < scene.width; ++x) {
                if (shape_contains(scene.shapes[i].geometry, x, y)) mask.set(x, y, true);
            }
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------

namespace {

struct SlotGuard {
    std::counting_semaphore<1024>& slots;
    explicit SlotGuard(std::counting_semaphore<1024>& s) : slots(s) { slots.acquire(); }
    ~SlotGuard() { slots.release(); }
};

std::ptrdiff_t slot_count(int declared) { return std::clamp<std::ptrdiff_t>(declared, 1, 1024); }

} // namespace

PooledPolicy::PooledPolicy(PolicyBackend& inner) : inner_(inner), slots_(slot_count(inner.max_concurrency())) {}

ChatResponse PooledPolicy::complete(const ChatRequest& request) {
    SlotGuard guard(slots_);
    return inner_.complete(request);
}

PooledSegmenter::PooledSegmenter(SegmenterBackend& inner)
    : inner_(inner), slots_(slot_count(inner.max_concurrency())) {}

Mask PooledSegmenter::segment(const SegmentRequest& request) {
    SlotGuard guard(slots_);
    return inner_.segment(request);
}

} // namespace aperture
