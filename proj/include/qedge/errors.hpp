#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qedge {

/// Invalid user input: malformed graph, bad config field, out-of-range parameter.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (mu <= 0, shrink > 1, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class NoSpanningTreeError : public std::runtime_error {
public:
    NoSpanningTreeError() : std::runtime_error("no spanning tree") {}
    explicit NoSpanningTreeError(const std::string& detail)
        : std::runtime_error("no spanning tree: " + detail) {}
};

class CertificateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Event not allowed in the current zoom phase.
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// An identity that must hold for valid inputs did not (numerical breakdown).
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Config problems, all of them at once.
class ConfigError : public ValidationError {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : ValidationError(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (const auto& s : items) {
            if (!out.empty()) out += "\n";
            out += s;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

}  // namespace qedge
