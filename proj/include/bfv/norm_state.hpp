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

#include <cstdint>
#include <optional>
#include <string_view>

namespace bfv {

/// Which normalizations have been applied to an encoded vector.
enum class NormState : std::uint8_t {
  raw = 0,
  l2 = 1,
  power = 2,
  power_l2 = 3,
  intra = 4,
};

/// Normalization scheme requested on the command line.
enum class NormScheme : std::uint8_t {
  none = 0,
  l2 = 1,
  power = 2,
  power_l2 = 3,
  intra = 4,
};

inline const char* to_string(NormState s) {
  switch (s) {
    case NormState::raw: return "raw";
    case NormState::l2: return "l2";
    case NormState::power: return "power";
    case NormState::power_l2: return "power-l2";
    case NormState::intra: return "intra";
  }
  return "?";
}

// The CLI vocabulary; these strings are part of the external interface.
inline const char* to_string(NormScheme s) {
  switch (s) {
    case NormScheme::none: return "none";
    case NormScheme::l2: return "l2";
    case NormScheme::power: return "power";
    case NormScheme::power_l2: return "power-l2";
    case NormScheme::intra: return "intra";
  }
  return "?";
}

inline std::optional<NormScheme> parse_norm_scheme(std::string_view name) {
  if (name == "none") return NormScheme::none;
  if (name == "l2") return NormScheme::l2;
  if (name == "power") return NormScheme::power;
  if (name == "power-l2") return NormScheme::power_l2;
  if (name == "intra") return NormScheme::intra;
  return std::nullopt;
}

inline std::optional<NormState> norm_state_from_byte(std::uint8_t b) {
  if (b > static_cast<std::uint8_t>(NormState::intra)) return std::nullopt;
  return static_cast<NormState>(b);
}

}  // namespace bfv
