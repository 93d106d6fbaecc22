#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vidmem {

// Base class for all engine errors. Subclasses map 1:1 onto the failure
// modes surfaced by the public API so callers can catch precisely.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or length disagreement between operands.
class InvalidDimension : public Error {
public:
    explicit InvalidDimension(const std::string& msg) : Error(msg) {}
};

// Argument outside its documented domain (counts, ranges, enum values).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Zero-norm vector where a direction is required.
class DegenerateVector : public Error {
public:
    explicit DegenerateVector(const std::string& msg) : Error(msg) {}
};

// Requested (layer, head) attention block not present in the trace.
class MissingTrace : public Error {
public:
    explicit MissingTrace(const std::string& msg) : Error(msg) {}
};

// Clip ids pushed into short-term memory must be strictly increasing.
class OutOfOrderClip : public Error {
public:
    explicit OutOfOrderClip(const std::string& msg) : Error(msg) {}
};

// Assembled context would exceed the configured window. Always an error,
// never silent truncation.
class ContextOverflow : public Error {
public:
    explicit ContextOverflow(const std::string& msg) : Error(msg) {}
};

// Retrieval over an empty caption store.
class EmptyStore : public Error {
public:
    explicit EmptyStore(const std::string& msg) : Error(msg) {}
};

// File could not be opened, read, or written.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed trace/state file. Carries the byte offset where parsing failed.
class TraceFormatError : public Error {
public:
    TraceFormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const { return offset_; }

private:
    std::size_t offset_;
};

// File declares a container version this build does not understand.
class UnsupportedVersion : public Error {
public:
    explicit UnsupportedVersion(const std::string& msg) : Error(msg) {}
};

// Config file problems (unknown key, bad value, missing section). Carries
// the 1-based line number when known, 0 otherwise.
class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace vidmem
