#pragma once

#include <stdexcept>
#include <string>

namespace kmland {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing, unreadable or malformed input files.
class InputError : public Error {
public:
    using Error::Error;
};

// Invalid parameters or a configuration that contradicts its inputs.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Violated precondition of a library call (programming error on the caller side).
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace kmland
