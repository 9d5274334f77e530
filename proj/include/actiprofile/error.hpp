#pragma once

#include <stdexcept>
#include <string>

namespace actiprofile {

/// Broad failure category; the CLI maps each one to its exit code.
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Short machine-readable tag, e.g. "ParseError" or "DegenerateGamma".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what)
        : Error(ErrorKind::data, "ParseError", "line " + std::to_string(line) + ": " + what),
          line(line) {}
    std::size_t line;
};

struct DataError : Error {
    explicit DataError(const std::string& what, std::string code = "DataError")
        : Error(ErrorKind::data, std::move(code), what) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, "UsageError", what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what, std::string code = "NumericalError")
        : Error(ErrorKind::numerical, std::move(code), what) {}
};

struct NoAdmissibleSplit : DataError {
    explicit NoAdmissibleSplit(const std::string& what) : DataError(what, "NoAdmissibleSplit") {}
};

struct DegenerateResponse : DataError {
    explicit DegenerateResponse(const std::string& what) : DataError(what, "DegenerateResponse") {}
};

struct DegenerateLogit : DataError {
    explicit DegenerateLogit(const std::string& what) : DataError(what, "DegenerateLogit") {}
};

struct DegenerateGamma : NumericalError {
    explicit DegenerateGamma(const std::string& what) : NumericalError(what, "DegenerateGamma") {}
};

struct ConvergenceError : NumericalError {
    ConvergenceError(const std::string& what, double gap)
        : NumericalError(what + " (last change " + std::to_string(gap) + ")", "ConvergenceError"),
          gap(gap) {}
    double gap;
};

} // namespace actiprofile
