#pragma once

#include <stdexcept>
#include <string>

namespace ctxvul {

enum class ErrorCode {
    Config,
    Io,
    Network,
    UnknownRevision,
    NotFound,
    Ambiguous,
    EmptyGraph,
    Transport,
    Provider,
    Parse,
    Schema,
    LabelMismatch,
    Consistency,
    MissingLabel,
    Duplicate,
    EmptyEvaluation,
    MissingTrace,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // Network and transport failures are worth retrying; everything else is not.
    bool retriable() const noexcept {
        return code_ == ErrorCode::Network || code_ == ErrorCode::Transport;
    }

private:
    ErrorCode code_;
};

}  // namespace ctxvul
