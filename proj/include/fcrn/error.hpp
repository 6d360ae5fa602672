#pragma once

#include <stdexcept>
#include <string>

namespace fcrn {

/// Failure categories. The CLI maps each onto a stable exit code.
enum class ErrorKind {
    InvalidArgument,
    OutOfRange,
    State,
    Data,
    Numeric,
    Compatibility,
    Config,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error invalid_argument(const std::string& msg) { return {ErrorKind::InvalidArgument, msg}; }
inline Error out_of_range(const std::string& msg) { return {ErrorKind::OutOfRange, msg}; }
inline Error state_error(const std::string& msg) { return {ErrorKind::State, msg}; }
inline Error data_error(const std::string& msg) { return {ErrorKind::Data, msg}; }
inline Error numeric_error(const std::string& msg) { return {ErrorKind::Numeric, msg}; }
inline Error compatibility_error(const std::string& msg) { return {ErrorKind::Compatibility, msg}; }
inline Error config_error(const std::string& msg) { return {ErrorKind::Config, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::Io, msg}; }

// Exit codes: 0 ok, 2 IO, 3 schema, 4 numeric, 5 compatibility, 1 anything else.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
    case ErrorKind::Compatibility:
    case ErrorKind::OutOfRange: return 5;
    default: return 1;
    }
}

}  // namespace fcrn
