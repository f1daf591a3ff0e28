#pragma once

#include <stdexcept>
#include <string>

namespace uwbg {

/// Precondition violation on an argument value.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tensor or image dimensions that do not fit together.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk data. `field()` names the offending header field.
class FormatError : public std::runtime_error {
public:
    FormatError(std::string field, const std::string& what)
        : std::runtime_error(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Model configuration that does not validate. `layer_index()` is -1 when
/// the problem is not tied to a single layer.
class ConfigError : public std::runtime_error {
public:
    ConfigError(int layer_index, const std::string& what)
        : std::runtime_error(what), layer_index_(layer_index) {}

    int layer_index() const noexcept { return layer_index_; }

private:
    int layer_index_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BenchmarkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace uwbg
