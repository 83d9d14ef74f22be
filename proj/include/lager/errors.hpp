#pragma once

#include <stdexcept>
#include <string>

namespace lager {

// Every failure the library raises derives from Error. The CLI maps the
// subclass to its exit code (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad caller input: out-of-range flags, shape mismatches, empty batches.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Data that violates a type invariant (record, batch, annotation).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input text. Carries the 1-based line number when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values or impossible renormalization.
class NumericError : public Error {
public:
    using Error::Error;
};

// Must be called from inside a catch block. Rethrows the in-flight lager
// error as the same subclass with `prefix: ` prepended to its message.
[[noreturn]] void rethrow_with_prefix(const std::string& prefix);

// 0 success; 1 validation/argument; 2 I/O; 3 numeric.
int exit_code(const Error& e);

}  // namespace lager
