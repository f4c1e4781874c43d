#pragma once

#include <stdexcept>
#include <string>

namespace leddam {

/// Base of every error the toolkit raises. `kind()` is a stable short name
/// the CLI prints in diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& message) : Error("dimension_error", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message) : Error("precondition_error", message) {}
};

class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& message) : Error("evaluation_error", message) {}
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch, const std::string& message)
        : Error("divergence_error", message), epoch_(epoch), batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

/// File-level problems. `kind()` distinguishes the cause: missing_file,
/// ragged_row, non_numeric, non_monotone_timestamp, bad_header, io_error.
class ParseError : public Error {
public:
    ParseError(std::string kind, const std::string& message, std::size_t row = 0, std::size_t column = 0)
        : Error(std::move(kind), message), row_(row), column_(column) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

} // namespace leddam
