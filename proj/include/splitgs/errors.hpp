#pragma once

#include <stdexcept>
#include <string>

namespace splitgs {

/// Invalid or non-finite arguments to a numeric routine.
struct InvalidParameterError : std::invalid_argument {
    explicit InvalidParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Covariance that cannot be inverted even after regularization.
struct DegenerateGaussianError : std::runtime_error {
    explicit DegenerateGaussianError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: mismatched shapes, stale caches, missing forward state.
struct ContractViolationError : std::logic_error {
    explicit ContractViolationError(const std::string& msg) : std::logic_error(msg) {}
};

/// Non-finite gradients or loss during optimization.
struct TrainingDivergenceError : std::runtime_error {
    explicit TrainingDivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Corrupt or incompatible serialized data.
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dataset directory or file cannot be ingested.
struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Pruning guard tripped: the rule would remove essentially the whole set.
struct PruneGuardError : std::runtime_error {
    explicit PruneGuardError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Warning sink. Writes to stderr; tests may swap it out.
void log_warn(const std::string& msg);

using WarnHandler = void (*)(const std::string&);
WarnHandler set_warn_handler(WarnHandler handler);

}  // namespace splitgs
