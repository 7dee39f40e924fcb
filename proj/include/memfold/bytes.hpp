/* Copyright 2026 The memfold Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace memfold {

// All byte quantities are whole bytes. Arithmetic throws instead of wrapping.
using Bytes = std::uint64_t;

inline Bytes checked_mul(Bytes a, Bytes b) {
  Bytes out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw std::overflow_error("byte count overflow in multiplication");
  }
  return out;
}

inline Bytes checked_add(Bytes a, Bytes b) {
  Bytes out = 0;
  if (__builtin_add_overflow(a, b, &out)) {
    throw std::overflow_error("byte count overflow in addition");
  }
  return out;
}

template <typename... Rest>
Bytes checked_product(Bytes first, Rest... rest) {
  Bytes out = first;
  ((out = checked_mul(out, static_cast<Bytes>(rest))), ...);
  return out;
}

// Requires divisor > 0.
constexpr Bytes ceil_div(Bytes value, Bytes divisor) {
  return value / divisor + (value % divisor != 0 ? 1 : 0);
}

}  // namespace memfold
