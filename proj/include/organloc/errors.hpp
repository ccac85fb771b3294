/*
 * Copyright 2026 The organloc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace organloc {

/// Reasons a binary file (volume, mask stack, depth image, checkpoint) can be
/// rejected by a reader.
enum class FormatErrc {
  bad_magic,
  bad_version,
  unknown_dtype,
  dtype_mismatch,
  truncated,
  size_mismatch,
  invalid_value,
  arch_mismatch,
};

const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

/// Raised by the training loop when the loss stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace organloc
