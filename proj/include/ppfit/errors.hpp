// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_ERRORS_HPP
#define PPFIT_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace ppfit {

// Query point or pattern point lies outside the observation window.
struct OutOfDomainError : std::runtime_error {
    explicit OutOfDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced where a finite one is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Covariate carries no information (e.g. constant field passed to minmax_scale).
struct DegenerateCovariateError : std::runtime_error {
    explicit DegenerateCovariateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optimizer failed to reach the gradient tolerance within the iteration budget.
struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, std::vector<double> trace)
        : std::runtime_error(msg), objective_trace(std::move(trace)) {}
    std::vector<double> objective_trace;
};

// Covariance matrix could not be factorized even after jitter escalation.
struct ConditioningError : std::runtime_error {
    explicit ConditioningError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: config, model spec, or data that fails a precondition.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ppfit

#endif  // PPFIT_ERRORS_HPP
