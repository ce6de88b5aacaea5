#include "dime/error.hpp"

namespace dime {

std::string_view error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::DuplicateName: return "DuplicateName";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Incompatible: return "Incompatible";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::CorruptRegistry: return "CorruptRegistry";
        case ErrorCode::PayloadRejected: return "PayloadRejected";
        case ErrorCode::PluginError: return "PluginError";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::HandshakeMismatch: return "HandshakeMismatch";
        case ErrorCode::LaunchError: return "LaunchError";
        case ErrorCode::MalformedCode: return "MalformedCode";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::UnknownItem: return "UnknownItem";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NoRelevant: return "NoRelevant";
        case ErrorCode::EmptyRequest: return "EmptyRequest";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::Conflict: return "Conflict";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message),
      code_(code),
      message_(message) {}

}  // namespace dime
