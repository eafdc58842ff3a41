#pragma once

#include <stdexcept>
#include <string>

namespace fracheat {

/// Argument outside the mathematical domain of an operation.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A numerical method could not reach its requested accuracy.
class precision_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A linear-algebra kernel failed (e.g. eigendecomposition did not converge).
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A user-supplied object violates its stated invariants.
class validation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or incomplete experiment configuration.
class config_error : public std::runtime_error {
public:
    config_error(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace fracheat
