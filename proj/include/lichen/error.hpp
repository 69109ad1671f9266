#pragma once

#include <stdexcept>
#include <string>

namespace lichen {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Fewer than four calibration targets, or their corner roles are ambiguous.
class DetectionFailure : public Error {
public:
    DetectionFailure(int found, const std::string& what)
        : Error(what), found_(found) {}
    int found() const noexcept { return found_; }

private:
    int found_;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

// A colour model could not be fitted because one class has no pixels.
class ModelFailure : public Error {
public:
    using Error::Error;
};

class InvalidTrainingSet : public Error {
public:
    using Error::Error;
};

class SpecInfeasible : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

class Conflict : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lichen
