#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qnctl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
    using Error::Error;
};

struct RegularizationRequiredError : Error {
    using Error::Error;
};

// Plant state left the admissible region; carries the first offending sample.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, std::size_t step_index)
        : Error(what), step(step_index) {}
    std::size_t step;
};

struct InstabilityError : Error {
    using Error::Error;
};

struct NoDataError : Error {
    using Error::Error;
};

struct UndefinedKappaError : Error {
    using Error::Error;
};

struct NonFiniteGradientError : Error {
    using Error::Error;
};

struct RunAbortedError : Error {
    using Error::Error;
};

// ILC made no progress; the best input seen so far is attached.
struct StagnationError : Error {
    StagnationError(const std::string& what, Eigen::VectorXd best)
        : Error(what), best_input(std::move(best)) {}
    Eigen::VectorXd best_input;
};

}  // namespace qnctl
