#ifndef TA_ERROR_HPP
#define TA_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ta {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Too few inputs for the requested model.
class ArityError : public Error {
public:
    using Error::Error;
};

/// Inputs present but geometrically degenerate (collinear, coincident, singular).
class DegeneracyError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class GeometryError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EncodingError : public Error {
public:
    using Error::Error;
};

class ProjectionError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class KindError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text input. Carries the byte offset where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace ta

#endif // TA_ERROR_HPP
