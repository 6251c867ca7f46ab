/*
 * Copyright (c) 2026 The SlimGraph Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SLIMGRAPH_ERROR_HPP_
#define SLIMGRAPH_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace slimgraph {

/// Error categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
  kUsage = 1,
  kValidation = 2,
  kFormat = 3,
  kInternal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail_validation(const std::string& message) {
  throw Error(ErrorCode::kValidation, message);
}

[[noreturn]] inline void fail_format(const std::string& message) {
  throw Error(ErrorCode::kFormat, message);
}

[[noreturn]] inline void fail_internal(const std::string& message) {
  throw Error(ErrorCode::kInternal, message);
}

}  // namespace slimgraph

#endif  // SLIMGRAPH_ERROR_HPP_
