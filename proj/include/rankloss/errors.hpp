#pragma once

#include <stdexcept>
#include <string>

namespace rankloss {

// Bad input: malformed files, invalid boxes, scenarios that break a precondition.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values or a violated numerical invariant.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rankloss
