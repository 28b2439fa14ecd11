// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace advsdg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A precondition on argument values failed (ranges, counts, normalization).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Operation applied to a volume of the wrong imaging modality.
class ModalityError : public Error {
public:
    using Error::Error;
};

/// Unknown or malformed configuration key. `key()` names the offender.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(what), key_(std::move(key)) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// File-system or serialization failure, including corrupt checkpoints.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced non-finite values twice and was halted.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

}  // namespace advsdg
