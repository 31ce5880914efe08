#pragma once

// Policy and segmenter backends: the interfaces the episode loop drives, a
// deterministic scripted policy, HTTP wire clients, and the geometric oracle
// segmenter for synthetic scenes.

#include "aperture/error.hpp"
#include "aperture/message.hpp"
#include "aperture/protocol.hpp"
#include "aperture/scene.hpp"
#include "aperture/views.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

namespace aperture {

using Seconds = std::chrono::duration<double>;

struct SamplingParams {
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    int max_tokens = 1024;
};

struct TokenLogprob {
    std::string token;
    double logp = 0.0;

    friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct ChatRequest {
    std::string task_id;
    std::span<const Message> messages;
    SamplingParams params;
};

struct ChatResponse {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    Seconds latency{0};
};

/// Failure raised by a backend call; carries the time spent before the error.
class BackendError : public Error {
public:
    BackendError(ErrorKind kind, const std::string& message, Seconds latency)
        : Error(kind, message), latency_(latency) {}

    Seconds latency() const { return latency_; }

private:
    Seconds latency_;
};

class PolicyBackend {
public:
    virtual ~PolicyBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual int max_concurrency() const { return 1; }
};

ChatResponse chat_complete(PolicyBackend& backend, const ChatRequest& request);

struct SegmentRequest {
    std::string image_id;
    std::shared_ptr<const Image> image;
    SegmentAction action;
};

class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual Mask segment(const SegmentRequest& request) = 0;
    virtual int max_concurrency() const { return 1; }
};

// ---------------------------------------------------------------------------
// Scripted policy

struct ScriptTurn {
    std::string task_id;
    int turn_index = 0;
    std::string text;
    Seconds latency{0};
};

class ScriptedPolicy : public PolicyBackend {
public:
    enum class Fallback { Answer, Loop };

    explicit ScriptedPolicy(std::vector<ScriptTurn> turns, Fallback fallback = Fallback::Loop,
                            std::string fallback_answer = {});

    ChatResponse complete(const ChatRequest& request) override;
    int max_concurrency() const override { return 64; }

    std::size_t size() const { return turns_.size(); }
    const std::vector<ScriptTurn>& turns() const { return turns_; }

private:
    std::vector<ScriptTurn> turns_;
    std::map<std::string, std::vector<std::size_t>> by_task_;
    Fallback fallback_;
    std::string fallback_answer_;
};

/// Whitespace tokenization with zero log-probabilities.
std::vector<TokenLogprob> deterministic_tokens(std::string_view text);

/// Parses a JSON-lines script ({task_id, turn_index, text, latency?} per line;
/// an optional {"fallback": "loop" | {"answer": "..."}} line). Every turn is
/// checked against the variant's grammar; failures report the record index.
ScriptedPolicy parse_script(std::string_view content, PromptVariant variant);
ScriptedPolicy load_script(const std::filesystem::path& path, PromptVariant variant);

// ---------------------------------------------------------------------------
// HTTP clients

struct HttpEndpoint {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::string path = "/";
    double timeout_seconds = 60.0;
    int max_attempts = 3;
    double backoff_seconds = 0.25;
    int max_concurrency = 4;
};

/// Message history in the wire schema; images become base64 PNG parts.
nlohmann::json messages_to_wire(std::span<const Message> messages);

/// POSTs {messages, temperature, seed, max_tokens}; expects {text, token_logprobs?}.
class RemotePolicy : public PolicyBackend {
public:
    explicit RemotePolicy(HttpEndpoint endpoint);
    ChatResponse complete(const ChatRequest& request) override;
    int max_concurrency() const override { return endpoint_.max_concurrency; }

private:
    HttpEndpoint endpoint_;
};

nlohmann::json segment_request_to_wire(const SegmentRequest& request);
Mask segment_response_from_wire(const nlohmann::json& response);

/// POSTs {image, bbox, points, labels}; expects {mask} as a base64 1-bit PNG.
class RemoteSegmenter : public SegmenterBackend {
public:
    explicit RemoteSegmenter(HttpEndpoint endpoint);
    Mask segment(const SegmentRequest& request) override;
    int max_concurrency() const override { return endpoint_.max_concurrency; }

private:
    HttpEndpoint endpoint_;
};

/// Segmenter stub for synthetic scenes: union of the topmost shapes under the
/// foreground points inside the box, minus shapes hit by background points.
class GeometricOracle : public SegmenterBackend {
public:
    void register_scene(const std::string& image_id, std::shared_ptr<const SyntheticScene> scene);
    Mask segment(const SegmentRequest& request) override;
    int max_concurrency() const override { return 64; }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const SyntheticScene>> scenes_;
};

Mask oracle_mask(const SyntheticScene& scene, const SegmentAction& action);

// ---------------------------------------------------------------------------
// Pooling

/// Caps in-flight calls to the wrapped backend at its declared concurrency.
class PooledPolicy : public PolicyBackend {
public:
    explicit PooledPolicy(PolicyBackend& inner);
    ChatResponse complete(const ChatRequest& request) override;
    int max_concurrency() const override { return inner_.max_concurrency(); }

private:
    PolicyBackend& inner_;
    std::counting_semaphore<1024> slots_;
};

class PooledSegmenter : public SegmenterBackend {
public:
    explicit PooledSegmenter(SegmenterBackend& inner);
    Mask segment(const SegmentRequest& request) override;
    int max_concurrency() const override { return inner_.max_concurrency(); }

private:
    SegmenterBackend& inner_;
    std::counting_semaphore<1024> slots_;
};

} // namespace aperture
