#pragma once

#include <stdexcept>
#include <string>

namespace porte {

// Base for all toolkit errors. CLI maps IoError/FormatError/ParseError to
// exit code 2, everything else to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed or unsupported file contents (bad RIFF header, unknown codec).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Manifest/TSV parse failure; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    size_t line_number;
};

// Signal fails a content precondition: fully silent, too short, or
// loudness unmeasurable.
class SignalError : public Error {
public:
    explicit SignalError(const std::string& msg) : Error(msg) {}
};

class CorpusError : public Error {
public:
    explicit CorpusError(const std::string& msg) : Error(msg) {}
};

// Mixture admits no prompt type (same gender, simultaneous start,
// near-equal lengths). The generation driver resamples the plan.
class UnpromptableError : public Error {
public:
    explicit UnpromptableError(const std::string& msg) : Error(msg) {}
};

}  // namespace porte
