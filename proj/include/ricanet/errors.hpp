#pragma once

#include <cstddef>
#include <exception>
#include <string>
#include <utility>

namespace ricanet {

enum class ErrorKind {
    Shape,
    Numeric,
    Geometry,
    Config,
    Data,
    DegenerateRow,
    Partition,
    Consistency,
    Hash,
    Underrun,
};

// Base of every error thrown by the library. The message can be extended with
// context (field coordinates, layer/block indices) while the error propagates.
class Error : public std::exception {
public:
    Error(ErrorKind kind, std::string message) : kind_(kind), message_(std::move(message)) {}

    const char* what() const noexcept override { return message_.c_str(); }
    ErrorKind kind() const noexcept { return kind_; }

    void prepend_context(const std::string& context) { message_ = context + ": " + message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

struct ShapeError : Error {
    explicit ShapeError(std::string m) : Error(ErrorKind::Shape, std::move(m)) {}
};

struct NumericError : Error {
    NumericError(std::string m, std::size_t index)
        : Error(ErrorKind::Numeric, std::move(m) + " (index " + std::to_string(index) + ")"), index(index) {}
    std::size_t index;
};

struct GeometryError : Error {
    explicit GeometryError(std::string m) : Error(ErrorKind::Geometry, std::move(m)) {}
};

struct ConfigError : Error {
    explicit ConfigError(std::string m) : Error(ErrorKind::Config, std::move(m)) {}
};

struct DataError : Error {
    explicit DataError(std::string m) : Error(ErrorKind::Data, std::move(m)) {}
};

struct DegenerateRowError : Error {
    explicit DegenerateRowError(std::size_t row)
        : Error(ErrorKind::DegenerateRow, "degenerate weight row " + std::to_string(row) + " (norm < 1e-30)"),
          row(row) {}
    std::size_t row;
};

struct PartitionError : Error {
    explicit PartitionError(std::string m) : Error(ErrorKind::Partition, std::move(m)) {}
};

struct ConsistencyError : Error {
    explicit ConsistencyError(std::string m) : Error(ErrorKind::Consistency, std::move(m)) {}
};

struct HashError : Error {
    explicit HashError(std::string m) : Error(ErrorKind::Hash, std::move(m)) {}
};

struct UnderrunError : Error {
    explicit UnderrunError(std::string m) : Error(ErrorKind::Underrun, std::move(m)) {}
};

// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Numeric:
    case ErrorKind::DegenerateRow:
        return 4;
    case ErrorKind::Data:
    case ErrorKind::Hash:
    case ErrorKind::Underrun:
        return 3;
    default:
        return 2;
    }
}

} // namespace ricanet
