// Copyright 2026 The misfeat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace misfeat {

// Bad input: malformed files, violated preconditions, inconsistent configs.
// The CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Failures that happen while running a valid request (divergence, missing
// upstream artifacts, I/O). The CLI maps it to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when MI is requested for a subset that contains a systematically
// missing feature; callers must fall back to a prediction.
class MissingFeatureError : public ValidationError {
 public:
  explicit MissingFeatureError(const std::string& what) : ValidationError(what) {}
};

}  // namespace misfeat
