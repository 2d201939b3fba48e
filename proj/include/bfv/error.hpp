/*
 * Copyright 2026 The bfv authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace bfv {

/// Base class of every error thrown by the library.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Operands disagree on bit dimension or vector length.
class dimension_error : public error {
 public:
  using error::error;
};

/// A precondition or a type invariant does not hold.
class validation_error : public error {
 public:
  using error::error;
};

/// Non-finite intermediate values or other numeric breakdown.
class numeric_error : public error {
 public:
  using error::error;
};

/// File-format and filesystem failures, tagged with a machine-checkable kind.
class io_error : public error {
 public:
  enum class kind {
    open_failed,
    bad_magic,
    bad_version,
    truncated,
    nonzero_padding,
    malformed,
    write_failed,
  };

  io_error(kind k, const std::string& what) : error(what), kind_(k) {}
  kind which() const noexcept { return kind_; }

 private:
  kind kind_;
};

}  // namespace bfv
