#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfe2 {

// Rejected input: out-of-range parameters, malformed files, bad meshes.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Linear system could not be factorized.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Newton iteration did not reach the tolerance. Carries the residual norms.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}

    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

} // namespace mfe2
