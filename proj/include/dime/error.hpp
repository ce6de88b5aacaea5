#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dime {

enum class ErrorCode {
    DuplicateId,
    DuplicateName,
    InvariantViolation,
    MissingField,
    NotFound,
    Incompatible,
    IoError,
    CorruptRegistry,
    PayloadRejected,
    PluginError,
    DimMismatch,
    HandshakeMismatch,
    LaunchError,
    MalformedCode,
    BadMagic,
    UnsupportedVersion,
    ChecksumMismatch,
    TruncatedFile,
    UnknownItem,
    EmptyInput,
    NoRelevant,
    EmptyRequest,
    InvalidRequest,
    Conflict,
};

/// Stable name of an error code, e.g. "Incompatible".
std::string_view error_name(ErrorCode code) noexcept;

/// Every domain failure in the engine is reported as a dime::Error.
/// what() is "<Name>: <message>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace dime
