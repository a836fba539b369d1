// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace seqrec {

// Base for all library failures. The C API maps subclasses onto status codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text, bad JSON, unknown enum strings.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// A versioned file carries a version this build does not understand.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

// Filesystem trouble: missing file, unreadable path, failed write.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// An input collection became (or was) empty where data is required.
class EmptyInputError : public Error {
public:
    explicit EmptyInputError(const std::string& msg) : Error(msg) {}
};

// Caller violated a documented precondition (shape mismatch, bad range, ...).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss and the trial was aborted.
class DivergedError : public Error {
public:
    explicit DivergedError(const std::string& msg) : Error(msg) {}
};

}  // namespace seqrec
