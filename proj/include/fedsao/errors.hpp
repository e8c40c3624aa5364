#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsao {

// Argument outside an operation's domain (non-positive distance, bandwidth, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// The resource allocation problem has no solution. `constraint` names the
// binding constraint ("energy", "bandwidth", "frequency").
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(std::string constraint, const std::string& what)
        : std::runtime_error(what), constraint_(std::move(constraint)) {}

    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string constraint_;
};

// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed binary input. `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace fedsao
