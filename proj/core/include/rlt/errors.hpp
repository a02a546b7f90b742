// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rlt {

// Base for everything the library throws. Callers that only care about
// "did it work" catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite pixels or otherwise unusable numeric input.
class DataError : public Error {
public:
    using Error::Error;
};

// Incompatible geometry or parameters (non-divisible axes, bad std, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

// Caller broke an operation's usage rules (non-adjacent slots, ratio >= 1,
// mixed configs in one pack, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

// An internal structural invariant does not hold on the given value.
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed file. `offset` is the byte position where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class StreamError : public Error {
public:
    StreamError(const std::string& what, std::uint64_t frames_received)
        : Error(what + " (frames received: " + std::to_string(frames_received) + ")"),
          frames_received_(frames_received) {}

    std::uint64_t frames_received() const noexcept { return frames_received_; }

private:
    std::uint64_t frames_received_;
};

// Packed batch whose boundaries disagree with its contents.
class IntegrityError : public Error {
public:
    using Error::Error;
};

}  // namespace rlt
