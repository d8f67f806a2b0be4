/*
 Copyright 2026 The Contraflow Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace contraflow {

// Shape or length disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A caller-supplied value outside the operation's domain.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or encountered during evaluation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A documented precondition (symmetry, orthonormality, ...) does not hold.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Lie-algebra coefficient outside the open pi-ball, or a rotation too close to pi.
class FirstCoverError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class UnsupportedDimension : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Training aborted because the loss became non-finite.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace contraflow
