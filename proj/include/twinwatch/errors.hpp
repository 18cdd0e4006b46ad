#pragma once

#include <stdexcept>
#include <string>

namespace twinwatch {

/// Inputs violate a numeric domain requirement (non-finite value, negative
/// length, fault delta <= -1, ...).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Two series that must share a time grid do not.
class AlignmentError : public std::runtime_error {
public:
    explicit AlignmentError(const std::string& what) : std::runtime_error(what) {}
};

/// A resample target lies outside the span of the source trace.
class ExtrapolationError : public std::runtime_error {
public:
    explicit ExtrapolationError(const std::string& what) : std::runtime_error(what) {}
};

/// Every sample of a metric input was excluded; the metric has no value.
class DegenerateDataError : public std::runtime_error {
public:
    explicit DegenerateDataError(const std::string& what) : std::runtime_error(what) {}
};

/// A store write would violate key uniqueness or referential integrity.
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

/// A queried entity does not exist.
class NotFoundError : public std::runtime_error {
public:
    explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: bad topic pattern, missing threshold, malformed
/// scenario file, ...
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation on a closed or otherwise unusable component.
class LifecycleError : public std::runtime_error {
public:
    explicit LifecycleError(const std::string& what) : std::runtime_error(what) {}
};

/// A bounded queue rejected a publish instead of dropping it.
class OverflowError : public std::runtime_error {
public:
    explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

/// Simulation horizon not covered by the trajectory, or another violated
/// operation precondition.
class PreconditionError : public std::runtime_error {
public:
    explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace twinwatch
