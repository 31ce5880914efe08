#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aperture {

enum class ErrorKind {
    InvalidTask,
    EmptyTurn,
    MalformedToolCall,
    MultipleToolCalls,
    MalformedAnswer,
    MultipleAnswers,
    ToolCallWithAnswer,
    MissingObservation,
    UnknownTool,
    SchemaViolation,
    VariantViolation,
    InternalError,
    PhaseError,
    ApertureBudgetExceeded,
    DegenerateBox,
    DimensionMismatch,
    SegmenterUnavailable,
    EmptyMask,
    MissingGroundTruth,
    GroupTooSmall,
    MissingTokenMetadata,
    LengthMismatch,
    UnknownFamily,
    InvalidStage,
    DivergenceDetected,
    Timeout,
    TransportError,
    RateLimited,
    ScriptParseError,
    ParamError,
    LogCorrupt,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind);
ErrorKind error_kind_from_string(std::string_view name);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace aperture
