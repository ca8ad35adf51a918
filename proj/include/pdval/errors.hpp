/*
 * Copyright 2026 The pdval Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace pdval {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates a documented precondition (bad coordinate, k = 0, id out of range...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Tensor extents do not line up for the requested operation.
class InvalidShape : public Error {
public:
    using Error::Error;
};

/// A forward op produced NaN or Inf.
class NonFinite : public Error {
public:
    using Error::Error;
};

/// Caller broke an API contract (e.g. backward from a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class DegenerateVariance : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class Divergence : public Error {
public:
    Divergence(int epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Input file does not match its declared schema (missing column, bad JSON shape).
class SchemaError : public Error {
public:
    using Error::Error;
};

} // namespace pdval
