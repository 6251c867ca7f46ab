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

#ifndef SLIMGRAPH_HALF_HPP_
#define SLIMGRAPH_HALF_HPP_

#include <cstdint>

namespace slimgraph {

/// IEEE binary16 encode with round-to-nearest-even. Handles subnormals,
/// overflow to +/-inf and NaN propagation.
uint16_t float_to_half(float value);
float half_to_float(uint16_t bits);

constexpr float kHalfMax = 65504.0f;

}  // namespace slimgraph

#endif  // SLIMGRAPH_HALF_HPP_
