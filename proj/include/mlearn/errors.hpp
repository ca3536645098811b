#pragma once

#include <stdexcept>
#include <string>

namespace mlearn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: malformed scenario, dangling index, Kraft violation at load.
class ScenarioError : public Error {
public:
    using Error::Error;
};

// An invariant the constructions promise was found broken while running.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

class UnknownIndex : public Error {
public:
    using Error::Error;
};

// find_n_sigma exhausted its cap: the learner contradicts the observation
// that every prediction either converges or churns.
class NonConformingLearner : public Error {
public:
    using Error::Error;
};

}  // namespace mlearn
