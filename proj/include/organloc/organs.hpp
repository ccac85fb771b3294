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

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace organloc {

inline constexpr std::size_t kOrganCount = 11;

/// Canonical channel order. Channel indices in files, checkpoints and
/// reports always refer to this list.
inline constexpr std::array<std::string_view, kOrganCount> kOrganNames = {
    "hips",     "femurs",   "vertebra", "heart",   "lungs",          "kidneys",
    "liver",    "pancreas", "spleen",   "stomach", "urinary_bladder"};

enum class Organ : std::size_t {
  hips = 0,
  femurs,
  vertebra,
  heart,
  lungs,
  kidneys,
  liver,
  pancreas,
  spleen,
  stomach,
  urinary_bladder,
};

constexpr std::size_t organ_index(Organ o) { return static_cast<std::size_t>(o); }

constexpr std::string_view organ_name(Organ o) { return kOrganNames[organ_index(o)]; }

constexpr std::optional<Organ> organ_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOrganCount; ++i) {
    if (kOrganNames[i] == name) return static_cast<Organ>(i);
  }
  return std::nullopt;
}

}  // namespace organloc
