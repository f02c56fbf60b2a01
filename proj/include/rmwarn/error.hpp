#pragma once

#include <stdexcept>
#include <string>

namespace rmwarn {

// Exception hierarchy. The CLI maps each family onto an exit code:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class LookupError : public DataError {
public:
    using DataError::DataError;
};

class EmptyBatchError : public DataError {
public:
    using DataError::DataError;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateChannelError : public NumericError {
public:
    using NumericError::NumericError;
};

class TrainingError : public NumericError {
public:
    TrainingError(int epoch, const std::string& what)
        : NumericError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class CalibrationError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace rmwarn
