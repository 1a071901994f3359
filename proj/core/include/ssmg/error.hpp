#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssmg {

// Broad error classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Usage,      // bad arguments to an API or command
    Data,       // missing/insufficient data, bad config, empty condition
    Numeric,    // shape, index and contract violations in numeric code
    Integrity,  // corrupt or inconsistent files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Short machine-parseable tag such as "E_SHAPE".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error(ErrorKind::Numeric, "E_SHAPE", m) {}
};

struct IndexError : Error {
    explicit IndexError(const std::string& m) : Error(ErrorKind::Numeric, "E_INDEX", m) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error(ErrorKind::Numeric, "E_CONTRACT", m) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& m) : Error(ErrorKind::Usage, "E_ARGUMENT", m) {}
};

struct DataError : Error {
    DataError(std::string code, const std::string& m) : Error(ErrorKind::Data, std::move(code), m) {}
    explicit DataError(const std::string& m) : DataError("E_DATA", m) {}
};

struct InsufficientDataError : DataError {
    explicit InsufficientDataError(const std::string& m) : DataError("E_INSUFFICIENT_DATA", m) {}
};

struct EmptyConditionError : DataError {
    explicit EmptyConditionError(const std::string& m) : DataError("E_EMPTY_CONDITION", m) {}
};

struct ContextLengthError : DataError {
    explicit ContextLengthError(const std::string& m) : DataError("E_CONTEXT_LENGTH", m) {}
};

struct ConfigError : DataError {
    explicit ConfigError(const std::string& m) : DataError("E_CONFIG", m) {}
};

struct IntegrityError : Error {
    explicit IntegrityError(const std::string& m) : Error(ErrorKind::Integrity, "E_INTEGRITY", m) {}
};

}  // namespace ssmg
