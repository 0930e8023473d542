#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csas {

// Every failure the engine reports carries one of these codes. The gateway
// maps them onto HTTP statuses; the CLI maps them onto exit codes.
enum class ErrorCode {
    EmptyBank,
    ConfigError,
    InsufficientItems,
    ValidationError,
    SeedCountError,
    DuplicateSeed,
    StorageError,
    NotFound,
    InvalidTransition,
    BackendError,
    DegenerateVector,
    DataIntegrityError,
    EmptyExport,
    ScenarioError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyBank: return "EmptyBank";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::InsufficientItems: return "InsufficientItems";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::SeedCountError: return "SeedCountError";
        case ErrorCode::DuplicateSeed: return "DuplicateSeed";
        case ErrorCode::StorageError: return "StorageError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::InvalidTransition: return "InvalidTransition";
        case ErrorCode::BackendError: return "BackendError";
        case ErrorCode::DegenerateVector: return "DegenerateVector";
        case ErrorCode::DataIntegrityError: return "DataIntegrityError";
        case ErrorCode::EmptyExport: return "EmptyExport";
        case ErrorCode::ScenarioError: return "ScenarioError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

template <ErrorCode Code>
class CodedError : public Error {
public:
    explicit CodedError(const std::string& message) : Error(Code, message) {}
};

using EmptyBankError = CodedError<ErrorCode::EmptyBank>;
using ConfigError = CodedError<ErrorCode::ConfigError>;
using InsufficientItemsError = CodedError<ErrorCode::InsufficientItems>;
using ValidationError = CodedError<ErrorCode::ValidationError>;
using SeedCountError = CodedError<ErrorCode::SeedCountError>;
using DuplicateSeedError = CodedError<ErrorCode::DuplicateSeed>;
using StorageError = CodedError<ErrorCode::StorageError>;
using NotFoundError = CodedError<ErrorCode::NotFound>;
using InvalidTransitionError = CodedError<ErrorCode::InvalidTransition>;
using BackendError = CodedError<ErrorCode::BackendError>;
using DegenerateVectorError = CodedError<ErrorCode::DegenerateVector>;
using DataIntegrityError = CodedError<ErrorCode::DataIntegrityError>;
using EmptyExportError = CodedError<ErrorCode::EmptyExport>;
using ScenarioError = CodedError<ErrorCode::ScenarioError>;

}  // namespace csas
