#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptseg {

enum class ErrorCode {
    InvalidInput,
    ShapeMismatch,
    NoForeground,
    TrainingDivergence,
    NothingToUndo,
    NotFound,
    Busy,
    Io,
    Parse,
};

/// Stable machine-readable name, used in service error bodies.
constexpr std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidInput: return "invalid_input";
        case ErrorCode::ShapeMismatch: return "shape_mismatch";
        case ErrorCode::NoForeground: return "no_foreground";
        case ErrorCode::TrainingDivergence: return "training_divergence";
        case ErrorCode::NothingToUndo: return "nothing_to_undo";
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::Busy: return "busy";
        case ErrorCode::Io: return "io_error";
        case ErrorCode::Parse: return "parse_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace promptseg
