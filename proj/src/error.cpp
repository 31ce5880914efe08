#include "aperture/error.hpp"

#include <array>
#include <utility>

namespace aperture {

namespace {

constexpr std::array<std::pair<ErrorKind, std::string_view>, 33> kNames{{
    {ErrorKind::InvalidTask, "InvalidTask"},
    {ErrorKind::EmptyTurn, "EmptyTurn"},
    {ErrorKind::MalformedToolCall, "MalformedToolCall"},
    {ErrorKind::MultipleToolCalls, "MultipleToolCalls"},
    {ErrorKind::MalformedAnswer, "MalformedAnswer"},
    {ErrorKind::MultipleAnswers, "MultipleAnswers"},
    {ErrorKind::ToolCallWithAnswer, "ToolCallWithAnswer"},
    {ErrorKind::MissingObservation, "MissingObservation"},
    {ErrorKind::UnknownTool, "UnknownTool"},
    {ErrorKind::SchemaViolation, "SchemaViolation"},
    {ErrorKind::VariantViolation, "VariantViolation"},
    {ErrorKind::InternalError, "InternalError"},
    {ErrorKind::PhaseError, "PhaseError"},
    {ErrorKind::ApertureBudgetExceeded, "ApertureBudgetExceeded"},
    {ErrorKind::DegenerateBox, "DegenerateBox"},
    {ErrorKind::DimensionMismatch, "DimensionMismatch"},
    {ErrorKind::SegmenterUnavailable, "SegmenterUnavailable"},
    {ErrorKind::EmptyMask, "EmptyMask"},
    {ErrorKind::MissingGroundTruth, "MissingGroundTruth"},
    {ErrorKind::GroupTooSmall, "GroupTooSmall"},
    {ErrorKind::MissingTokenMetadata, "MissingTokenMetadata"},
    {ErrorKind::LengthMismatch, "LengthMismatch"},
    {ErrorKind::UnknownFamily, "UnknownFamily"},
    {ErrorKind::InvalidStage, "InvalidStage"},
    {ErrorKind::DivergenceDetected, "DivergenceDetected"},
    {ErrorKind::Timeout, "Timeout"},
    {ErrorKind::TransportError, "TransportError"},
    {ErrorKind::RateLimited, "RateLimited"},
    {ErrorKind::ScriptParseError, "ScriptParseError"},
    {ErrorKind::ParamError, "ParamError"},
    {ErrorKind::LogCorrupt, "LogCorrupt"},
    {ErrorKind::ConfigError, "ConfigError"},
    {ErrorKind::IoError, "IoError"},
}};

} // namespace

std::string_view to_string(ErrorKind kind) {
    for (const auto& [k, name] : kNames) {
        if (k == kind) return name;
    }
    return "Unknown";
}

ErrorKind error_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kNames) {
        if (n == name) return k;
    }
    throw Error(ErrorKind::LogCorrupt, "unknown error kind '" + std::string(name) + "'");
}

} // namespace aperture
