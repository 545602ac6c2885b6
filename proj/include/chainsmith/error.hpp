#pragma once

#include <stdexcept>
#include <string>

namespace chainsmith {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration; `field()` names the offending dotted path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("config: " + field + ": " + what), field_(std::move(field)), reason_(what) {}
    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string field_;
    std::string reason_;
};

}  // namespace chainsmith
